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

// Token traces: per-sample, per-token model-output statistics. This is the
// only input the attacks consume, so any model (the built-in simulator or an
// external exporter) can be audited by writing this format.
//
// File layout: UTF-8, one JSON object per line. Line 1 is the header
//   {"format":"iartrace/1","mode":"discrete","vocab":64,"seq_len":32,"seed":7,...}
// (continuous traces carry "token_dim" instead of "vocab"); every following
// line is one SampleTrace. A ".gz" suffix selects gzip compression.
// All logarithms are natural.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "iaraudit/common.hpp"
#include "json.hpp"

namespace iaraudit {

using json = nlohmann::json;

inline constexpr std::string_view kTraceFormat = "iartrace/1";

/// Percentile levels stored per token, in this order.
inline constexpr std::array<int, 5> kQuantileLevels = {10, 20, 30, 40, 50};

enum class Mode { kDiscrete, kContinuous };
enum class Split { kMember, kNonmember, kSuspect };

inline std::string to_string(Mode m) { return m == Mode::kDiscrete ? "discrete" : "continuous"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "discrete") return Mode::kDiscrete;
  if (s == "continuous") return Mode::kContinuous;
  fail(ErrorKind::kInput, "unknown mode '" + s + "'");
}

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kMember:
      return "member";
    case Split::kNonmember:
      return "nonmember";
    case Split::kSuspect:
      return "suspect";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "member") return Split::kMember;
  if (s == "nonmember") return Split::kNonmember;
  if (s == "suspect") return Split::kSuspect;
  fail(ErrorKind::kInput, "unknown split '" + s + "'");
}

/// Statistics of the vocabulary distribution at one position.
struct TokenStats {
  double loglik_true = 0.0;
  double max_other_loglik = 0.0;
  double vocab_mean = 0.0;
  double vocab_std = 0.0;
  double entropy = 0.0;
  std::array<double, 5> prob_quantiles{};  // indexed like kQuantileLevels

  bool operator==(const TokenStats&) const = default;
};

/// Same statistics over log p(.|c) - log p(.|c_null).
struct DiffTokenStats {
  double diff_true = 0.0;
  double diff_max_other = 0.0;
  double diff_mean = 0.0;
  double diff_std = 0.0;

  bool operator==(const DiffTokenStats&) const = default;
};

/// Repeated diffusion losses for one continuous token. Unmasked tokens carry
/// an empty loss list.
struct LossRepeats {
  std::vector<double> losses;
  int timestep = 0;
  bool mask_flag = false;

  bool operator==(const LossRepeats&) const = default;
};

struct SampleTrace {
  std::string sample_id;
  int class_label = 0;
  Split split = Split::kMember;

  // Discrete mode.
  std::vector<int> tokens;
  std::vector<TokenStats> cond;
  std::optional<std::vector<TokenStats>> uncond;
  std::optional<std::vector<DiffTokenStats>> diff;
  std::optional<std::vector<TokenStats>> repeated_pass;

  // Continuous mode: `token_vectors` is N x token_dim.
  std::vector<std::vector<double>> token_vectors;
  std::vector<LossRepeats> cond_loss;
  std::optional<std::vector<LossRepeats>> uncond_loss;
  std::optional<std::vector<LossRepeats>> repeated_pass_loss;

  bool operator==(const SampleTrace&) const = default;
};

struct TraceHeader {
  Mode mode = Mode::kDiscrete;
  int vocab = 0;      // discrete
  int token_dim = 0;  // continuous
  int seq_len = 0;
  std::uint64_t seed = 0;
  json generator = json::object();

  bool operator==(const TraceHeader&) const = default;
};

struct TraceFile {
  TraceHeader header;
  std::vector<SampleTrace> samples;
};

// ---------------------------------------------------------------------------
// Validation.

namespace detail {

inline void check(bool ok, const std::string& sample_id, const std::string& what) {
  if (!ok) fail(ErrorKind::kInput, "invalid record '" + sample_id + "': " + what);
}

inline bool finite(double v) { return std::isfinite(v); }

inline void validate_stats(const std::vector<TokenStats>& block, const TraceHeader& h,
                           const std::string& id, const char* name) {
  check(block.size() == static_cast<std::size_t>(h.seq_len), id,
        std::string(name) + " has " + std::to_string(block.size()) + " entries, header seq_len " +
            std::to_string(h.seq_len));
  const double max_entropy = std::log(static_cast<double>(h.vocab)) + 1e-9;
  for (std::size_t t = 0; t < block.size(); ++t) {
    const TokenStats& s = block[t];
    const std::string at = std::string(name) + "[" + std::to_string(t) + "]";
    check(finite(s.loglik_true) && s.loglik_true <= 0.0, id, at + ".loglik_true must be <= 0");
    check(finite(s.max_other_loglik) && s.max_other_loglik <= 0.0, id,
          at + ".max_other_loglik must be <= 0");
    check(finite(s.vocab_mean), id, at + ".vocab_mean must be finite");
    check(finite(s.vocab_std) && s.vocab_std >= 0.0, id, at + ".vocab_std must be >= 0");
    check(finite(s.entropy) && s.entropy >= 0.0 && s.entropy <= max_entropy, id,
          at + ".entropy must lie in [0, ln vocab]");
    for (std::size_t q = 0; q < s.prob_quantiles.size(); ++q) {
      const double v = s.prob_quantiles[q];
      check(finite(v) && v >= 0.0 && v <= 1.0, id, at + ".prob_quantiles outside [0,1]");
      if (q > 0) {
        check(v >= s.prob_quantiles[q - 1], id, at + ".prob_quantiles must be non-decreasing");
      }
    }
  }
}

inline void validate_losses(const std::vector<LossRepeats>& block, const TraceHeader& h,
                            const std::string& id, const char* name) {
  check(block.size() == static_cast<std::size_t>(h.seq_len), id,
        std::string(name) + " has " + std::to_string(block.size()) + " entries, header seq_len " +
            std::to_string(h.seq_len));
  std::optional<int> timestep;
  std::optional<std::size_t> repeats;
  for (std::size_t t = 0; t < block.size(); ++t) {
    const LossRepeats& r = block[t];
    const std::string at = std::string(name) + "[" + std::to_string(t) + "]";
    check(r.timestep >= 0, id, at + ".timestep must be >= 0");
    if (timestep) check(*timestep == r.timestep, id, at + ": all tokens must share one timestep");
    timestep = r.timestep;
    if (!r.mask_flag) {
      check(r.losses.empty(), id, at + ": unmasked token must not carry losses");
      continue;
    }
    check(!r.losses.empty(), id, at + ": masked token needs at least one loss");
    if (repeats) check(*repeats == r.losses.size(), id, at + ": ragged repeat count");
    repeats = r.losses.size();
    for (double v : r.losses) check(finite(v) && v >= 0.0, id, at + ": losses must be >= 0");
  }
}

}  // namespace detail

inline void validate_header(const TraceHeader& h) {
  require(h.seq_len >= 1, ErrorKind::kInput, "header seq_len must be >= 1");
  if (h.mode == Mode::kDiscrete) {
    require(h.vocab >= 2, ErrorKind::kInput, "header vocab must be >= 2");
  } else {
    require(h.token_dim >= 1, ErrorKind::kInput, "header token_dim must be >= 1");
  }
}

/// Checks every record invariant against the header; throws naming the sample.
inline void validate_sample(const SampleTrace& s, const TraceHeader& h) {
  const std::string& id = s.sample_id;
  detail::check(!id.empty(), "<empty>", "sample_id must be non-empty");
  detail::check(s.class_label >= 0, id, "class_label must be >= 0");
  const auto n = static_cast<std::size_t>(h.seq_len);
  if (h.mode == Mode::kDiscrete) {
    detail::check(s.token_vectors.empty() && s.cond_loss.empty() && !s.uncond_loss &&
                      !s.repeated_pass_loss,
                  id, "continuous blocks in a discrete trace");
    detail::check(s.tokens.size() == n, id,
                  "tokens has " + std::to_string(s.tokens.size()) + " entries, header seq_len " +
                      std::to_string(h.seq_len));
    for (int tok : s.tokens) {
      detail::check(tok >= 0 && tok < h.vocab, id, "token outside [0, vocab)");
    }
    detail::validate_stats(s.cond, h, id, "cond");
    if (s.uncond) detail::validate_stats(*s.uncond, h, id, "uncond");
    if (s.repeated_pass) detail::validate_stats(*s.repeated_pass, h, id, "repeated_pass");
    if (s.diff) {
      detail::check(s.uncond.has_value(), id, "diff requires an uncond block");
      detail::check(s.diff->size() == n, id, "diff length differs from seq_len");
      for (const auto& d : *s.diff) {
        detail::check(detail::finite(d.diff_true) && detail::finite(d.diff_max_other) &&
                          detail::finite(d.diff_mean),
                      id, "diff values must be finite");
        detail::check(detail::finite(d.diff_std) && d.diff_std >= 0.0, id,
                      "diff_std must be >= 0");
      }
    }
  } else {
    detail::check(s.tokens.empty() && s.cond.empty() && !s.uncond && !s.diff && !s.repeated_pass,
                  id, "discrete blocks in a continuous trace");
    detail::check(s.token_vectors.size() == n, id,
                  "tokens has " + std::to_string(s.token_vectors.size()) +
                      " entries, header seq_len " + std::to_string(h.seq_len));
    for (const auto& v : s.token_vectors) {
      detail::check(v.size() == static_cast<std::size_t>(h.token_dim), id,
                    "token vector dimension differs from token_dim");
      for (double x : v) detail::check(detail::finite(x), id, "token values must be finite");
    }
    detail::validate_losses(s.cond_loss, h, id, "cond");
    if (s.uncond_loss) detail::validate_losses(*s.uncond_loss, h, id, "uncond");
    if (s.repeated_pass_loss) detail::validate_losses(*s.repeated_pass_loss, h, id, "repeated_pass");
  }
}

// ---------------------------------------------------------------------------
// JSON mapping.

inline json header_to_json(const TraceHeader& h) {
  json j;
  j["format"] = kTraceFormat;
  j["mode"] = to_string(h.mode);
  if (h.mode == Mode::kDiscrete) {
    j["vocab"] = h.vocab;
  } else {
    j["token_dim"] = h.token_dim;
  }
  j["seq_len"] = h.seq_len;
  j["seed"] = h.seed;
  j["generator"] = h.generator;
  return j;
}

inline TraceHeader header_from_json(const json& j) {
  require(j.is_object() && j.contains("format"), ErrorKind::kInput, "missing header");
  require(j.at("format") == kTraceFormat, ErrorKind::kInput,
          "unsupported trace format " + j.at("format").dump());
  TraceHeader h;
  h.mode = parse_mode(j.at("mode").get<std::string>());
  if (h.mode == Mode::kDiscrete) {
    h.vocab = j.at("vocab").get<int>();
  } else {
    h.token_dim = j.at("token_dim").get<int>();
  }
  h.seq_len = j.at("seq_len").get<int>();
  h.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("generator")) h.generator = j.at("generator");
  validate_header(h);
  return h;
}

namespace detail {

inline json stats_to_json(const TokenStats& s) {
  json q = json::object();
  for (std::size_t i = 0; i < kQuantileLevels.size(); ++i) {
    q[std::to_string(kQuantileLevels[i])] = s.prob_quantiles[i];
  }
  return {{"loglik_true", s.loglik_true}, {"max_other_loglik", s.max_other_loglik},
          {"vocab_mean", s.vocab_mean},   {"vocab_std", s.vocab_std},
          {"entropy", s.entropy},         {"prob_quantiles", q}};
}

inline TokenStats stats_from_json(const json& j) {
  TokenStats s;
  s.loglik_true = j.at("loglik_true").get<double>();
  s.max_other_loglik = j.at("max_other_loglik").get<double>();
  s.vocab_mean = j.at("vocab_mean").get<double>();
  s.vocab_std = j.at("vocab_std").get<double>();
  s.entropy = j.at("entropy").get<double>();
  const json& q = j.at("prob_quantiles");
  require(q.size() == kQuantileLevels.size(), ErrorKind::kInput,
          "prob_quantiles must have keys 10,20,30,40,50");
  for (std::size_t i = 0; i < kQuantileLevels.size(); ++i) {
    s.prob_quantiles[i] = q.at(std::to_string(kQuantileLevels[i])).get<double>();
  }
  return s;
}

inline json diff_to_json(const DiffTokenStats& d) {
  return {{"diff_true", d.diff_true},
          {"diff_max_other", d.diff_max_other},
          {"diff_mean", d.diff_mean},
          {"diff_std", d.diff_std}};
}

inline DiffTokenStats diff_from_json(const json& j) {
  return {j.at("diff_true").get<double>(), j.at("diff_max_other").get<double>(),
          j.at("diff_mean").get<double>(), j.at("diff_std").get<double>()};
}

inline json loss_to_json(const LossRepeats& r) {
  return {{"losses", r.losses}, {"timestep", r.timestep}, {"mask_flag", r.mask_flag}};
}

inline LossRepeats loss_from_json(const json& j) {
  LossRepeats r;
  r.losses = j.at("losses").get<std::vector<double>>();
  r.timestep = j.at("timestep").get<int>();
  r.mask_flag = j.at("mask_flag").get<bool>();
  return r;
}

template <typename T, typename Fn>
json block_to_json(const std::vector<T>& block, Fn&& fn) {
  json arr = json::array();
  for (const auto& x : block) arr.push_back(fn(x));
  return arr;
}

template <typename Fn>
auto block_from_json(const json& arr, Fn&& fn) {
  require(arr.is_array(), ErrorKind::kInput, "block must be an array");
  std::vector<decltype(fn(arr.front()))> out;
  out.reserve(arr.size());
  for (const auto& x : arr) out.push_back(fn(x));
  return out;
}

}  // namespace detail

inline json sample_to_json(const SampleTrace& s, Mode mode) {
  json j;
  j["sample_id"] = s.sample_id;
  j["class_label"] = s.class_label;
  j["split"] = to_string(s.split);
  if (mode == Mode::kDiscrete) {
    j["tokens"] = s.tokens;
    j["cond"] = detail::block_to_json(s.cond, detail::stats_to_json);
    if (s.uncond) j["uncond"] = detail::block_to_json(*s.uncond, detail::stats_to_json);
    if (s.diff) j["diff"] = detail::block_to_json(*s.diff, detail::diff_to_json);
    if (s.repeated_pass) {
      j["repeated_pass"] = detail::block_to_json(*s.repeated_pass, detail::stats_to_json);
    }
  } else {
    j["tokens"] = s.token_vectors;
    j["cond"] = detail::block_to_json(s.cond_loss, detail::loss_to_json);
    if (s.uncond_loss) j["uncond"] = detail::block_to_json(*s.uncond_loss, detail::loss_to_json);
    if (s.repeated_pass_loss) {
      j["repeated_pass"] = detail::block_to_json(*s.repeated_pass_loss, detail::loss_to_json);
    }
  }
  return j;
}

inline SampleTrace sample_from_json(const json& j, Mode mode) {
  require(j.is_object(), ErrorKind::kInput, "record must be a JSON object");
  require(!j.contains("format"), ErrorKind::kInput, "unexpected header line inside body");
  SampleTrace s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.class_label = j.at("class_label").get<int>();
  s.split = parse_split(j.at("split").get<std::string>());
  const json& cond = j.at("cond");
  if (mode == Mode::kDiscrete) {
    require(cond.empty() || cond.front().contains("loglik_true"), ErrorKind::kInput,
            "mode mismatch: record '" + s.sample_id + "' is not discrete");
    s.tokens = j.at("tokens").get<std::vector<int>>();
    s.cond = detail::block_from_json(cond, detail::stats_from_json);
    if (j.contains("uncond")) s.uncond = detail::block_from_json(j["uncond"], detail::stats_from_json);
    if (j.contains("diff")) s.diff = detail::block_from_json(j["diff"], detail::diff_from_json);
    if (j.contains("repeated_pass")) {
      s.repeated_pass = detail::block_from_json(j["repeated_pass"], detail::stats_from_json);
    }
  } else {
    require(cond.empty() || cond.front().contains("losses"), ErrorKind::kInput,
            "mode mismatch: record '" + s.sample_id + "' is not continuous");
    s.token_vectors = j.at("tokens").get<std::vector<std::vector<double>>>();
    s.cond_loss = detail::block_from_json(cond, detail::loss_from_json);
    if (j.contains("uncond")) {
      s.uncond_loss = detail::block_from_json(j["uncond"], detail::loss_from_json);
    }
    if (j.contains("repeated_pass")) {
      s.repeated_pass_loss = detail::block_from_json(j["repeated_pass"], detail::loss_from_json);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Streaming reader and writer.

class TraceWriter {
 public:
  TraceWriter(const std::string& path, TraceHeader header)
      : header_(std::move(header)), out_(path) {
    validate_header(header_);
    out_.write_line(header_to_json(header_).dump());
  }

  /// Validates and appends one record; invalid records abort the write.
  void write(const SampleTrace& s) {
    validate_sample(s, header_);
    out_.write_line(sample_to_json(s, header_.mode).dump());
  }

  void close() { out_.close(); }

 private:
  TraceHeader header_;
  LineWriter out_;
};

class TraceReader {
 public:
  explicit TraceReader(const std::string& path) : in_(path) {
    auto first = in_.next();
    require(first.has_value(), ErrorKind::kInput, path + ": missing header (empty file)");
    json j;
    try {
      j = json::parse(*first);
    } catch (const json::exception& e) {
      fail(ErrorKind::kInput, path + ":1: missing header (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("format")) {
      fail(ErrorKind::kInput, path + ":1: missing header");
    }
    try {
      header_ = header_from_json(j);
    } catch (const json::exception& e) {
      fail(ErrorKind::kInput, path + ":1: bad header (" + e.what() + ")");
    } catch (const Error& e) {
      fail(ErrorKind::kInput, path + ":1: " + e.what());
    }
  }

  const TraceHeader& header() const { return header_; }

  /// Next validated record, or nullopt at end of file.
  std::optional<SampleTrace> next() {
    for (;;) {
      auto line = in_.next();
      if (!line) return std::nullopt;
      if (line->find_first_not_of(" \t") == std::string::npos) continue;
      const std::string where = in_.path() + ":" + std::to_string(in_.line_number()) + ": ";
      try {
        SampleTrace s = sample_from_json(json::parse(*line), header_.mode);
        validate_sample(s, header_);
        return s;
      } catch (const json::exception& e) {
        fail(ErrorKind::kInput, where + "malformed or truncated record (" + e.what() + ")");
      } catch (const Error& e) {
        fail(ErrorKind::kInput, where + e.what());
      }
    }
  }

 private:
  LineReader in_;
  TraceHeader header_;
};

inline void write_trace(const std::string& path, const TraceHeader& header,
                        const std::vector<SampleTrace>& samples) {
  TraceWriter w(path, header);
  for (const auto& s : samples) w.write(s);
  w.close();
}

inline TraceFile read_trace(const std::string& path) {
  TraceReader r(path);
  TraceFile f{r.header(), {}};
  while (auto s = r.next()) f.samples.push_back(std::move(*s));
  return f;
}

// ---------------------------------------------------------------------------
// Whole-file JSON documents (corpora, models, reports).

inline void write_json_file(const std::string& path, const json& j, int indent = -1) {
  LineWriter out(path);
  out.write_line(j.dump(indent));
  out.close();
}

inline json read_json_file(const std::string& path) {
  LineReader in(path);
  std::string text;
  while (auto line = in.next()) {
    text += *line;
    text += '\n';
  }
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInput, path + ": malformed JSON (" + e.what() + ")");
  }
}

}  // namespace iaraudit
