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

// Model oracles: the minimal query surface the audits need from an image
// autoregressive model, and the generic code that turns oracle queries into
// token traces. Oracles must be safe for concurrent const queries.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "iaraudit/attacks.hpp"
#include "iaraudit/common.hpp"
#include "iaraudit/token_stats.hpp"
#include "iaraudit/trace.hpp"

namespace iaraudit {

using Vectors = std::vector<std::vector<double>>;

/// Class label that selects the unconditional (label-dropped) branch.
inline constexpr int kNullClass = -1;

/// A labeled sequence of discrete tokens or continuous token vectors.
struct LabeledSequence {
  std::string sample_id;
  int class_label = 0;
  Split split = Split::kMember;
  std::vector<int> tokens;
  Vectors vectors;
  int copies = 1;  // occurrences in the training set

  bool operator==(const LabeledSequence&) const = default;
};

inline std::uint64_t hash_tokens(std::span<const int> tokens) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int t : tokens) {
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(t));
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h ^ tokens.size());
}

inline std::uint64_t hash_vectors(const Vectors& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& row : v) {
    for (double x : row) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &x, sizeof bits);
      h = splitmix64(h ^ bits);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Discrete oracles.

class DiscreteOracle {
 public:
  virtual ~DiscreteOracle() = default;
  virtual int vocab() const = 0;
  virtual int seq_len() const = 0;
  virtual bool has_unconditional() const = 0;
  /// Logits for the token at position context.size(). kNullClass queries the
  /// unconditional branch.
  virtual std::vector<double> next_logits(std::span<const int> context, int class_label) const = 0;
};

/// Index of the largest logit; the lowest index wins ties.
inline int argmax(std::span<const double> logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

/// Greedy prediction of every position from the true prefix, in one pass.
inline std::vector<int> teacher_forced_predict(const DiscreteOracle& o, std::span<const int> tokens,
                                               int class_label) {
  std::vector<int> out(tokens.size());
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    out[p] = argmax(o.next_logits(tokens.first(p), class_label));
  }
  return out;
}

struct Sampling {
  int top_k = 1;  // 1 is greedy
  std::uint64_t seed = 0;
};

/// Completes `prefix` to the oracle's sequence length without guidance.
inline std::vector<int> complete(const DiscreteOracle& o, std::span<const int> prefix, int class_label,
                                 const Sampling& sampling = {}) {
  require(sampling.top_k >= 1, ErrorKind::kUsage, "top_k must be >= 1");
  const auto n = static_cast<std::size_t>(o.seq_len());
  require(prefix.size() <= n, ErrorKind::kUsage, "prefix longer than the sequence");
  std::vector<int> seq(prefix.begin(), prefix.end());
  Rng rng = make_stream(sampling.seed, hash_string("complete"), hash_tokens(prefix),
                        static_cast<std::uint64_t>(class_label + 1));
  while (seq.size() < n) {
    const auto logits = o.next_logits(seq, class_label);
    if (sampling.top_k == 1) {
      seq.push_back(argmax(logits));
      continue;
    }
    std::vector<int> idx(logits.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(sampling.top_k), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](int a, int b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); });
    std::vector<double> w(k);
    for (std::size_t i = 0; i < k; ++i) w[i] = std::exp(logits[idx[i]] - logits[idx[0]]);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    seq.push_back(idx[pick(rng)]);
  }
  return seq;
}

struct DiscreteExportOptions {
  bool include_uncond = true;
  bool include_diff = true;
  bool include_repeated = true;
};

/// Log-probabilities of a second pass over the same sequence: the first-pass
/// token is available in context and receives half of the mass.
inline std::vector<double> repeated_pass_logp(std::span<const double> logp, int truth) {
  std::vector<double> out(logp.size());
  for (std::size_t i = 0; i < logp.size(); ++i) {
    const double p = 0.5 * std::exp(logp[i]) + (static_cast<int>(i) == truth ? 0.5 : 0.0);
    out[i] = std::log(p);
  }
  return out;
}

inline SampleTrace discrete_trace(const DiscreteOracle& o, const LabeledSequence& s,
                                  const DiscreteExportOptions& opt) {
  require(static_cast<int>(s.tokens.size()) == o.seq_len(), ErrorKind::kInput,
          "sample '" + s.sample_id + "' length differs from the model's");
  const bool uncond = opt.include_uncond || opt.include_diff;
  if (uncond) {
    require(o.has_unconditional(), ErrorKind::kInput,
            "model has no unconditional branch (no label-dropped training sequences)");
  }
  SampleTrace t;
  t.sample_id = s.sample_id;
  t.class_label = s.class_label;
  t.split = s.split;
  t.tokens = s.tokens;
  if (uncond) t.uncond.emplace();
  if (opt.include_diff) t.diff.emplace();
  if (opt.include_repeated) t.repeated_pass.emplace();
  const std::span<const int> tokens(s.tokens);
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    const int truth = tokens[p];
    const auto lp_c = log_softmax(o.next_logits(tokens.first(p), s.class_label));
    t.cond.push_back(compute_token_stats(lp_c, truth));
    if (uncond) {
      const auto lp_u = log_softmax(o.next_logits(tokens.first(p), kNullClass));
      t.uncond->push_back(compute_token_stats(lp_u, truth));
      if (opt.include_diff) t.diff->push_back(compute_diff_stats(lp_c, lp_u, truth));
    }
    if (opt.include_repeated) {
      t.repeated_pass->push_back(compute_token_stats(repeated_pass_logp(lp_c, truth), truth));
    }
  }
  return t;
}

inline TraceFile export_discrete_traces(const DiscreteOracle& o, const std::vector<LabeledSequence>& samples,
                                        const DiscreteExportOptions& opt, std::uint64_t seed,
                                        json generator = json::object(), int threads = 1) {
  TraceFile f;
  f.header.mode = Mode::kDiscrete;
  f.header.vocab = o.vocab();
  f.header.seq_len = o.seq_len();
  f.header.seed = seed;
  f.header.generator = std::move(generator);
  f.samples.resize(samples.size());
  parallel_for(samples.size(), threads,
               [&](std::size_t i) { f.samples[i] = discrete_trace(o, samples[i], opt); });
  return f;
}

// ---------------------------------------------------------------------------
// Continuous oracles.

class ContinuousOracle {
 public:
  virtual ~ContinuousOracle() = default;
  virtual int token_dim() const = 0;
  virtual int seq_len() const = 0;
  virtual bool has_unconditional() const = 0;
  virtual int diffusion_steps() const = 0;
  virtual double alpha_bar(int timestep) const = 0;
  /// Conditioning vector for every position given the visible tokens
  /// (mask[p] != 0 hides position p).
  virtual Vectors conditioning(const Vectors& tokens, const std::vector<char>& mask,
                               int class_label) const = 0;
  /// Predicted noise for noised token `noised`; `key` identifies the query.
  virtual std::vector<double> predict_noise(std::span<const double> noised, std::span<const double> cond,
                                            int timestep, std::uint64_t key) const = 0;
  /// Single-step prediction of the hidden tokens; visible tokens pass through.
  virtual Vectors predict_masked(const Vectors& tokens, const std::vector<char>& mask,
                                 int class_label) const = 0;
};

/// Number of hidden tokens for a mask ratio: round(ratio * n) within [1, n-1].
inline std::size_t masked_count(double mask_ratio, std::size_t n) {
  require(mask_ratio > 0.0 && mask_ratio < 1.0, ErrorKind::kUsage, "mask ratio must lie in (0,1)");
  require(n >= 2, ErrorKind::kUsage, "masking needs at least 2 tokens");
  const auto k = static_cast<std::size_t>(std::llround(mask_ratio * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

/// Seeded random mask with masked_count(mask_ratio, n) hidden positions.
inline std::vector<char> random_mask(std::size_t n, double mask_ratio, Rng& rng) {
  std::vector<char> mask(n, 0);
  for (std::size_t p : sample_without_replacement(n, masked_count(mask_ratio, n), rng)) mask[p] = 1;
  return mask;
}

struct ContinuousExportOptions {
  int timestep = 500;
  double mask_ratio = 0.95;
  int repeats = 64;
  bool include_uncond = true;
  bool include_repeated = true;
  std::uint64_t seed = 0;
};

inline SampleTrace continuous_trace(const ContinuousOracle& o, const LabeledSequence& s,
                                    const ContinuousExportOptions& opt) {
  const auto n = static_cast<std::size_t>(o.seq_len());
  const auto d = static_cast<std::size_t>(o.token_dim());
  require(s.vectors.size() == n, ErrorKind::kInput,
          "sample '" + s.sample_id + "' length differs from the model's");
  require(opt.repeats >= 1, ErrorKind::kUsage, "repeats must be >= 1");
  require(opt.timestep >= 0 && opt.timestep < o.diffusion_steps(), ErrorKind::kUsage,
          "timestep outside [0, diffusion steps)");
  if (opt.include_uncond) {
    require(o.has_unconditional(), ErrorKind::kInput,
            "model has no unconditional branch (no label-dropped training sequences)");
  }
  const std::uint64_t sid = hash_string(s.sample_id);
  Rng mask_rng = make_stream(opt.seed, hash_string("mask"), sid);
  const auto mask = random_mask(n, opt.mask_ratio, mask_rng);

  const Vectors cond = o.conditioning(s.vectors, mask, s.class_label);
  Vectors uncond;
  if (opt.include_uncond) uncond = o.conditioning(s.vectors, mask, kNullClass);

  const double ab = o.alpha_bar(opt.timestep);
  const double sa = std::sqrt(ab);
  const double sn = std::sqrt(1.0 - ab);
  Rng noise_rng = make_stream(opt.seed, hash_string("diffusion_noise"), sid);
  std::normal_distribution<double> normal(0.0, 1.0);

  SampleTrace t;
  t.sample_id = s.sample_id;
  t.class_label = s.class_label;
  t.split = s.split;
  t.token_vectors = s.vectors;
  auto blank = [&](std::size_t p) { return LossRepeats{{}, opt.timestep, mask[p] != 0}; };
  for (std::size_t p = 0; p < n; ++p) t.cond_loss.push_back(blank(p));
  if (opt.include_uncond) t.uncond_loss = t.cond_loss;
  if (opt.include_repeated) t.repeated_pass_loss = t.cond_loss;

  std::vector<double> eps(d), noised(d), copy_cond(d);
  auto loss = [&](std::span<const double> cvec, std::uint64_t key) {
    const auto pred = o.predict_noise(noised, cvec, opt.timestep, key);
    double l = 0.0;
    for (std::size_t j = 0; j < d; ++j) l += (eps[j] - pred[j]) * (eps[j] - pred[j]);
    return l;
  };
  for (std::size_t p = 0; p < n; ++p) {
    if (!mask[p]) continue;
    const auto& x = s.vectors[p];
    for (std::size_t j = 0; j < d; ++j) copy_cond[j] = 0.5 * cond[p][j] + 0.5 * x[j];
    for (int r = 0; r < opt.repeats; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        eps[j] = normal(noise_rng);
        noised[j] = sa * x[j] + sn * eps[j];
      }
      const std::uint64_t key = mix_keys(sid, p, static_cast<std::uint64_t>(r));
      t.cond_loss[p].losses.push_back(loss(cond[p], mix_keys(key, 0)));
      if (opt.include_uncond) (*t.uncond_loss)[p].losses.push_back(loss(uncond[p], mix_keys(key, 1)));
      if (opt.include_repeated) {
        (*t.repeated_pass_loss)[p].losses.push_back(loss(copy_cond, mix_keys(key, 2)));
      }
    }
  }
  return t;
}

inline TraceFile export_continuous_traces(const ContinuousOracle& o,
                                          const std::vector<LabeledSequence>& samples,
                                          const ContinuousExportOptions& opt,
                                          json generator = json::object(), int threads = 1) {
  TraceFile f;
  f.header.mode = Mode::kContinuous;
  f.header.token_dim = o.token_dim();
  f.header.seq_len = o.seq_len();
  f.header.seed = opt.seed;
  f.header.generator = std::move(generator);
  f.samples.resize(samples.size());
  parallel_for(samples.size(), threads,
               [&](std::size_t i) { f.samples[i] = continuous_trace(o, samples[i], opt); });
  return f;
}

/// Mean negative log-likelihood (discrete) or mean denoising loss
/// (continuous) of the conditional block over samples of `split`.
inline double mean_heldout_nll(const TraceFile& trace, Split split = Split::kNonmember) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& s : trace.samples) {
    if (s.split != split) continue;
    if (trace.header.mode == Mode::kDiscrete) {
      for (const auto& st : s.cond) sum -= st.loglik_true;
      count += s.cond.size();
    } else {
      for (double l : average_repeats(s.cond_loss)) sum += l;
      for (const auto& r : s.cond_loss) count += r.mask_flag ? 1 : 0;
    }
  }
  require(count > 0, ErrorKind::kNumerical, "no " + to_string(split) + " samples in trace");
  return sum / static_cast<double>(count);
}

}  // namespace iaraudit
