// Copyright 2026 The iaraudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Training-data extraction in three stages: rank training samples by how well
// a single teacher-forced pass reproduces them, complete the best candidates
// from a short prefix without guidance, and call a completion memorized when
// its similarity to the original reaches tau.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iaraudit/common.hpp"
#include "iaraudit/metrics.hpp"
#include "iaraudit/oracle.hpp"

namespace iaraudit {

inline constexpr double kDefaultTau = 0.75;
inline constexpr int kDefaultTopN = 5;
inline constexpr int kDefaultPrefixDiscrete = 30;
inline constexpr int kDefaultPrefixContinuous = 5;
inline constexpr double kCandidateMaskRatio = 0.95;

/// Prefix length used when none is given: the per-mode default, capped at a
/// quarter of the sequence.
inline int default_prefix_length(Mode mode, int seq_len) {
  const int base = mode == Mode::kDiscrete ? kDefaultPrefixDiscrete : kDefaultPrefixContinuous;
  return std::max(1, std::min(base, seq_len / 4));
}

inline double candidate_distance(std::span<const int> t, std::span<const int> t_hat) {
  require(t.size() == t_hat.size() && !t.empty(), ErrorKind::kUsage,
          "candidate_distance: sequences must have equal, non-zero length");
  std::size_t match = 0;
  for (std::size_t i = 0; i < t.size(); ++i) match += t[i] == t_hat[i] ? 1 : 0;
  return 100.0 - 100.0 * static_cast<double>(match) / static_cast<double>(t.size());
}

inline double candidate_distance(const Vectors& t, const Vectors& t_hat) {
  require(t.size() == t_hat.size(), ErrorKind::kUsage, "candidate_distance: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    require(t[i].size() == t_hat[i].size(), ErrorKind::kUsage, "candidate_distance: dimension mismatch");
    for (std::size_t j = 0; j < t[i].size(); ++j) d += (t[i][j] - t_hat[i][j]) * (t[i][j] - t_hat[i][j]);
  }
  return d;
}

/// Exact-match fraction.
inline double similarity(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size() && !a.empty(), ErrorKind::kUsage,
          "similarity: sequences must have equal, non-zero length");
  std::size_t match = 0;
  for (std::size_t i = 0; i < a.size(); ++i) match += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(match) / static_cast<double>(a.size());
}

/// Cosine similarity of the flattened sequences mapped to [0,1].
inline double similarity(const Vectors& a, const Vectors& b) {
  require(a.size() == b.size(), ErrorKind::kUsage, "similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i].size() == b[i].size(), ErrorKind::kUsage, "similarity: dimension mismatch");
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      dot += a[i][j] * b[i][j];
      na += a[i][j] * a[i][j];
      nb += b[i][j] * b[i][j];
    }
  }
  if (na == 0.0 || nb == 0.0) return na == nb ? 1.0 : 0.5;
  const double cos = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
  return (1.0 + cos) / 2.0;
}

using DiscreteSimilarity = std::function<double(std::span<const int>, std::span<const int>)>;
using ContinuousSimilarity = std::function<double(const Vectors&, const Vectors&)>;

struct ExtractionCandidate {
  std::string sample_id;
  int class_label = 0;
  double distance = 0.0;
  int rank = 0;  // 1-based within the class

  bool operator==(const ExtractionCandidate&) const = default;
};

struct ExtractionVerdict {
  std::string sample_id;
  int class_label = 0;
  double similarity = 0.0;
  bool memorized = false;
  int prefix_length = 0;
  bool false_positive_flag = false;

  bool operator==(const ExtractionVerdict&) const = default;
};

namespace detail {

inline std::vector<ExtractionCandidate> rank_per_class(std::vector<ExtractionCandidate> all, int top_n) {
  require(top_n >= 0, ErrorKind::kUsage, "top_n must be >= 0");
  std::sort(all.begin(), all.end(), [](const ExtractionCandidate& a, const ExtractionCandidate& b) {
    if (a.class_label != b.class_label) return a.class_label < b.class_label;
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.sample_id < b.sample_id;
  });
  std::vector<ExtractionCandidate> out;
  std::map<int, int> seen;
  for (auto& c : all) {
    c.rank = ++seen[c.class_label];
    if (c.rank <= top_n) out.push_back(c);
  }
  return out;
}

inline const LabeledSequence& find_sample(const std::map<std::string, const LabeledSequence*>& index,
                                          const std::string& id) {
  auto it = index.find(id);
  require(it != index.end(), ErrorKind::kInput, "candidate '" + id + "' not in the sample set");
  return *it->second;
}

}  // namespace detail

/// Teacher-forced distance of every training sample; top_n per class.
inline std::vector<ExtractionCandidate> select_candidates(const DiscreteOracle& o,
                                                          const std::vector<LabeledSequence>& training,
                                                          int top_n = kDefaultTopN, int threads = 1) {
  std::vector<ExtractionCandidate> all(training.size());
  parallel_for(training.size(), threads, [&](std::size_t i) {
    const auto& s = training[i];
    try {
      const auto pred = teacher_forced_predict(o, s.tokens, s.class_label);
      all[i] = {s.sample_id, s.class_label, candidate_distance(s.tokens, pred), 0};
    } catch (const Error& e) {
      fail(e.kind(), "sample '" + s.sample_id + "': " + e.what());
    }
  });
  return detail::rank_per_class(std::move(all), top_n);
}

/// Continuous variant: hide 95% of each sample (seeded) and predict it in one step.
inline std::vector<ExtractionCandidate> select_candidates(const ContinuousOracle& o,
                                                          const std::vector<LabeledSequence>& training,
                                                          int top_n = kDefaultTopN, std::uint64_t seed = 0,
                                                          int threads = 1) {
  std::vector<ExtractionCandidate> all(training.size());
  parallel_for(training.size(), threads, [&](std::size_t i) {
    const auto& s = training[i];
    try {
      Rng rng = make_stream(seed, hash_string("candidate_mask"), hash_string(s.sample_id));
      const auto mask = random_mask(s.vectors.size(), kCandidateMaskRatio, rng);
      const auto pred = o.predict_masked(s.vectors, mask, s.class_label);
      all[i] = {s.sample_id, s.class_label, candidate_distance(s.vectors, pred), 0};
    } catch (const Error& e) {
      fail(e.kind(), "sample '" + s.sample_id + "': " + e.what());
    }
  });
  return detail::rank_per_class(std::move(all), top_n);
}

/// Continuous completion: every position from `prefix_length` on is predicted
/// in one step from the visible prefix.
inline Vectors complete(const ContinuousOracle& o, const Vectors& tokens, int prefix_length,
                        int class_label) {
  std::vector<char> mask(tokens.size(), 0);
  for (std::size_t p = static_cast<std::size_t>(prefix_length); p < tokens.size(); ++p) mask[p] = 1;
  return o.predict_masked(tokens, mask, class_label);
}

struct ExtractOptions {
  int prefix_length = 8;
  double tau = kDefaultTau;
  int threads = 1;
  DiscreteSimilarity discrete_similarity;      // exact-match fraction when empty
  ContinuousSimilarity continuous_similarity;  // cosine mapping when empty
};

/// Greedy, guidance-free completion of every sample from its prefix.
inline std::vector<ExtractionVerdict> extract(const DiscreteOracle& o,
                                              const std::vector<LabeledSequence>& samples,
                                              const ExtractOptions& opt, bool validation = false) {
  require(opt.prefix_length >= 0 && opt.prefix_length < o.seq_len(), ErrorKind::kUsage,
          "prefix length must lie in [0, seq_len)");
  std::vector<ExtractionVerdict> out(samples.size());
  parallel_for(samples.size(), opt.threads, [&](std::size_t i) {
    const auto& s = samples[i];
    const std::span<const int> prefix(s.tokens.data(), static_cast<std::size_t>(opt.prefix_length));
    const auto gen = complete(o, prefix, s.class_label);
    const double sim = opt.discrete_similarity ? opt.discrete_similarity(gen, s.tokens)
                                               : similarity(std::span<const int>(gen), s.tokens);
    const bool mem = sim >= opt.tau;
    out[i] = {s.sample_id, s.class_label, sim, mem, opt.prefix_length, validation && mem};
  });
  return out;
}

inline std::vector<ExtractionVerdict> extract(const ContinuousOracle& o,
                                              const std::vector<LabeledSequence>& samples,
                                              const ExtractOptions& opt, bool validation = false) {
  require(opt.prefix_length >= 0 && opt.prefix_length < o.seq_len(), ErrorKind::kUsage,
          "prefix length must lie in [0, seq_len)");
  std::vector<ExtractionVerdict> out(samples.size());
  parallel_for(samples.size(), opt.threads, [&](std::size_t i) {
    const auto& s = samples[i];
    const auto gen = complete(o, s.vectors, opt.prefix_length, s.class_label);
    const double sim = opt.continuous_similarity ? opt.continuous_similarity(gen, s.vectors)
                                                 : similarity(gen, s.vectors);
    const bool mem = sim >= opt.tau;
    out[i] = {s.sample_id, s.class_label, sim, mem, opt.prefix_length, validation && mem};
  });
  return out;
}

/// The samples named by `candidates`, in candidate order.
inline std::vector<LabeledSequence> candidate_samples(const std::vector<ExtractionCandidate>& candidates,
                                                      const std::vector<LabeledSequence>& pool) {
  std::map<std::string, const LabeledSequence*> index;
  for (const auto& s : pool) index[s.sample_id] = &s;
  std::vector<LabeledSequence> out;
  for (const auto& c : candidates) out.push_back(detail::find_sample(index, c.sample_id));
  return out;
}

inline int count_memorized(const std::vector<ExtractionVerdict>& v) {
  return static_cast<int>(std::count_if(v.begin(), v.end(), [](const auto& x) { return x.memorized; }));
}

struct FalsePositiveReport {
  int prefix_length = 0;
  int flagged = 0;
  std::vector<std::pair<int, int>> sweep;  // (prefix length, flagged count)
  std::optional<int> max_safe_prefix;      // largest i with zero flags at every swept prefix <= i
};

/// Extraction against held-out samples at `opt.prefix_length` and over `sweep`
/// (ascending).
template <typename Oracle>
FalsePositiveReport false_positive_check(const Oracle& o, const std::vector<LabeledSequence>& validation,
                                         const ExtractOptions& opt, const std::vector<int>& sweep) {
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    require(sweep[i] > sweep[i - 1], ErrorKind::kUsage, "false-positive sweep must be ascending");
  }
  FalsePositiveReport r;
  bool clean = true;
  r.prefix_length = opt.prefix_length;
  r.flagged = count_memorized(extract(o, validation, opt, true));
  for (int i : sweep) {
    ExtractOptions o2 = opt;
    o2.prefix_length = i;
    const int flagged = i == opt.prefix_length ? r.flagged : count_memorized(extract(o, validation, o2, true));
    r.sweep.emplace_back(i, flagged);
    clean = clean && flagged == 0;
    if (clean) r.max_safe_prefix = i;
  }
  return r;
}

/// Rank correlation between candidate distance and completion similarity.
inline std::optional<double> filter_correlation(const std::vector<ExtractionCandidate>& candidates,
                                                const std::vector<ExtractionVerdict>& verdicts) {
  std::vector<double> d, s;
  for (std::size_t i = 0; i < candidates.size() && i < verdicts.size(); ++i) {
    d.push_back(candidates[i].distance);
    s.push_back(verdicts[i].similarity);
  }
  try {
    return spearman(d, s);
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline void write_extraction_csv(const std::string& path, const std::vector<ExtractionCandidate>& candidates,
                                 const std::vector<ExtractionVerdict>& verdicts) {
  LineWriter out(path);
  out.write_line("sample_id,class_label,rank,distance,prefix_length,similarity,memorized,false_positive");
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const auto& v = verdicts[i];
    const std::string rank = i < candidates.size() ? std::to_string(candidates[i].rank) : "";
    const std::string dist = i < candidates.size() ? format_real(candidates[i].distance) : "";
    out.write_line(v.sample_id + "," + std::to_string(v.class_label) + "," + rank + "," + dist + "," +
                   std::to_string(v.prefix_length) + "," + format_real(v.similarity) + "," +
                   (v.memorized ? "1" : "0") + "," + (v.false_positive_flag ? "1" : "0"));
  }
  out.close();
}

inline void write_candidates_csv(const std::string& path, const std::vector<ExtractionCandidate>& candidates) {
  LineWriter out(path);
  out.write_line("sample_id,class_label,rank,distance");
  for (const auto& c : candidates) {
    out.write_line(c.sample_id + "," + std::to_string(c.class_label) + "," + std::to_string(c.rank) + "," +
                   format_real(c.distance));
  }
  out.close();
}

inline std::vector<ExtractionCandidate> read_candidates_csv(const std::string& path) {
  LineReader in(path);
  auto header = in.next();
  require(header && *header == "sample_id,class_label,rank,distance", ErrorKind::kInput,
          path + ": not a candidate list");
  std::vector<ExtractionCandidate> out;
  while (auto line = in.next()) {
    if (line->empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(*line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    const std::string where = path + ":" + std::to_string(in.line_number()) + ": ";
    require(f.size() == 4, ErrorKind::kInput, where + "expected 4 columns");
    try {
      out.push_back({f[0], std::stoi(f[1]), std::stod(f[3]), std::stoi(f[2])});
    } catch (const std::exception& e) {
      fail(ErrorKind::kInput, where + e.what());
    }
  }
  return out;
}

}  // namespace iaraudit
