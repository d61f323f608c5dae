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

// Membership-inference scores over token traces.
//
// Every score is member-oriented: larger values mean "more likely a training
// member". Raw statistics whose small values indicate membership are negated
// exactly once, inside the function that computes them.

#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "iaraudit/common.hpp"
#include "iaraudit/trace.hpp"

namespace iaraudit {

/// Per-token view an attack consumes. `loglik` is a log-likelihood-like value
/// (higher = better fit): a log-probability, a conditional-minus-unconditional
/// difference, or a negated diffusion loss. Optional columns are empty when the
/// source block does not provide them.
struct TokenBlock {
  std::vector<double> loglik;
  std::vector<double> max_other;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<double> entropy;
  std::vector<std::array<double, 5>> quantiles;

  std::size_t size() const { return loglik.size(); }

  static TokenBlock from_stats(std::span<const TokenStats> stats) {
    TokenBlock b;
    for (const auto& s : stats) {
      b.loglik.push_back(s.loglik_true);
      b.max_other.push_back(s.max_other_loglik);
      b.mean.push_back(s.vocab_mean);
      b.stddev.push_back(s.vocab_std);
      b.entropy.push_back(s.entropy);
      b.quantiles.push_back(s.prob_quantiles);
    }
    return b;
  }

  static TokenBlock from_diff(std::span<const DiffTokenStats> diff) {
    TokenBlock b;
    for (const auto& d : diff) {
      b.loglik.push_back(d.diff_true);
      b.max_other.push_back(d.diff_max_other);
      b.mean.push_back(d.diff_mean);
      b.stddev.push_back(d.diff_std);
    }
    return b;
  }
};

// ---------------------------------------------------------------------------
// Scalar scores.

inline double loss_score(std::span<const double> logliks) {
  require(!logliks.empty(), ErrorKind::kNumerical, "loss_score: empty block");
  double sum = 0.0;
  for (double v : logliks) sum += v;
  return sum / static_cast<double>(logliks.size());
}

/// Number of tokens the Min-K% family averages: floor(k * n / 100), at least 1.
inline std::size_t min_k_count(double k_percent, std::size_t n) {
  require(k_percent > 0.0 && k_percent <= 100.0, ErrorKind::kUsage,
          "k_percent must lie in (0, 100]");
  const auto c = static_cast<std::size_t>(std::floor(k_percent * static_cast<double>(n) / 100.0 + 1e-9));
  return std::clamp<std::size_t>(c, 1, n);
}

namespace detail {

// Mean of the `count` smallest values. The selected values are summed in their
// original order, so selecting everything reproduces loss_score bit for bit.
inline double mean_of_smallest(std::span<const double> values, std::size_t count) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    return values[a] < values[b] || (values[a] == values[b] && a < b);
  };
  if (count < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), less);
    idx.resize(count);
  }
  std::sort(idx.begin(), idx.end());
  double sum = 0.0;
  for (std::size_t i : idx) sum += values[i];
  return sum / static_cast<double>(count);
}

}  // namespace detail

inline double min_k_score(std::span<const double> logliks, double k_percent) {
  require(!logliks.empty(), ErrorKind::kNumerical, "min_k_score: empty block");
  return detail::mean_of_smallest(logliks, min_k_count(k_percent, logliks.size()));
}

/// Token payload for the compression baseline: little-endian uint16 per token.
inline std::vector<unsigned char> token_payload(std::span<const int> tokens) {
  std::vector<unsigned char> bytes;
  bytes.reserve(tokens.size() * 2);
  for (int t : tokens) {
    require(t >= 0 && t <= 0xFFFF, ErrorKind::kUsage, "zlib payload: token outside uint16 range");
    bytes.push_back(static_cast<unsigned char>(t & 0xFF));
    bytes.push_back(static_cast<unsigned char>((t >> 8) & 0xFF));
  }
  return bytes;
}

/// zlib-compressed size at the default level.
inline std::size_t deflate_size(std::span<const unsigned char> payload) {
  uLongf len = compressBound(static_cast<uLong>(payload.size()));
  std::vector<Bytef> out(len);
  const int rc = compress2(out.data(), &len, payload.data(), static_cast<uLong>(payload.size()),
                           Z_DEFAULT_COMPRESSION);
  require(rc == Z_OK, ErrorKind::kNumerical, "zlib compression failed");
  return static_cast<std::size_t>(len);
}

inline double zlib_ratio_score(double mean_nll, std::size_t compressed_bytes) {
  require(compressed_bytes > 0, ErrorKind::kNumerical, "zlib: empty compressed payload");
  return -(mean_nll / static_cast<double>(compressed_bytes));
}

inline double zlib_score(std::span<const double> logliks, std::span<const int> tokens) {
  require(!tokens.empty(), ErrorKind::kUsage, "zlib_score needs discrete tokens");
  const double mean_nll = -loss_score(logliks);
  return zlib_ratio_score(mean_nll, deflate_size(token_payload(tokens)));
}

inline double hinge_score(const TokenBlock& block) {
  require(!block.loglik.empty(), ErrorKind::kNumerical, "hinge_score: empty block");
  require(block.max_other.size() == block.size(), ErrorKind::kUsage,
          "hinge_score: block has no max_other_loglik");
  double sum = 0.0;
  for (std::size_t t = 0; t < block.size(); ++t) sum += block.loglik[t] - block.max_other[t];
  return sum / static_cast<double>(block.size());
}

/// Min-K%++ over positions with nonzero vocabulary spread. Positions with zero
/// spread are skipped and counted in `skipped` when given.
inline double min_k_pp_score(const TokenBlock& block, double k_percent,
                             std::size_t* skipped = nullptr) {
  require(block.mean.size() == block.size() && block.stddev.size() == block.size(),
          ErrorKind::kUsage, "min_k_pp_score: block has no vocabulary mean/std");
  std::vector<double> z;
  z.reserve(block.size());
  for (std::size_t t = 0; t < block.size(); ++t) {
    if (block.stddev[t] > 0.0) z.push_back((block.loglik[t] - block.mean[t]) / block.stddev[t]);
  }
  if (skipped != nullptr) *skipped = block.size() - z.size();
  require(!z.empty(), ErrorKind::kNumerical, "min_k_pp_score: no scorable tokens");
  return detail::mean_of_smallest(z, min_k_count(k_percent, z.size()));
}

/// SURP: mean true-token probability over low-entropy positions whose true
/// token falls below the k-th probability percentile; 0 when none qualify.
inline double surp_score(const TokenBlock& block, int k_percent, double eps_entropy) {
  const auto level = std::find(kQuantileLevels.begin(), kQuantileLevels.end(), k_percent);
  require(level != kQuantileLevels.end(), ErrorKind::kUsage,
          "surp_score: k must be one of 10,20,30,40,50");
  require(block.entropy.size() == block.size() && block.quantiles.size() == block.size(),
          ErrorKind::kUsage, "surp_score: block has no entropy/quantiles");
  const auto q = static_cast<std::size_t>(level - kQuantileLevels.begin());
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < block.size(); ++t) {
    const double p = std::exp(block.loglik[t]);
    if (block.entropy[t] < eps_entropy && p < block.quantiles[t][q]) {
      sum += p;
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Context-aware signals over a per-token loss sequence.

inline double least_squares_slope(std::span<const double> y) {
  const auto n = static_cast<double>(y.size());
  const double xbar = (n - 1.0) / 2.0;
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dx = static_cast<double>(i) - xbar;
    sxy += dx * (y[i] - ybar);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Pincus approximate entropy with self-matches; 0 when r == 0.
inline double approximate_entropy(std::span<const double> x, int m, double r) {
  const auto n = static_cast<int>(x.size());
  if (r <= 0.0 || n < m + 1) return 0.0;
  auto phi = [&](int len) {
    const int windows = n - len + 1;
    double acc = 0.0;
    for (int i = 0; i < windows; ++i) {
      int matches = 0;
      for (int j = 0; j < windows; ++j) {
        bool close = true;
        for (int k = 0; k < len && close; ++k) close = std::abs(x[i + k] - x[j + k]) <= r;
        matches += close ? 1 : 0;
      }
      acc += std::log(static_cast<double>(matches) / windows);
    }
    return acc / windows;
  };
  return phi(m) - phi(m + 1);
}

/// Uniform quantization into `levels` bins between min and max (constant -> 0).
inline std::vector<int> quantize_uniform(std::span<const double> x, int levels) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  std::vector<int> out(x.size(), 0);
  if (x.empty() || *hi <= *lo) return out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int q = static_cast<int>(std::floor((x[i] - *lo) / (*hi - *lo) * levels));
    out[i] = std::clamp(q, 0, levels - 1);
  }
  return out;
}

/// Lempel-Ziv (1976) phrase count, Kaspar-Schuster scan.
inline int lz76_complexity(std::span<const int> s) {
  const auto n = static_cast<int>(s.size());
  if (n <= 1) return n;
  int c = 1, l = 1, i = 0, k = 1, kmax = 1;
  for (;;) {
    if (s[i + k - 1] == s[l + k - 1]) {
      ++k;
      if (l + k > n) {
        ++c;
        break;
      }
    } else {
      kmax = std::max(kmax, k);
      ++i;
      if (i == l) {
        ++c;
        l += kmax;
        if (l + 1 > n) break;
        i = 0;
        k = 1;
        kmax = 1;
      } else {
        k = 1;
      }
    }
  }
  return c;
}

struct CamiaFeatures {
  double slope = 0.0;
  double apen = 0.0;
  double lz = 0.0;
  double count_below = 0.0;
  std::optional<double> rep_amp;
};

inline constexpr int kApenEmbedding = 2;
inline constexpr double kApenTolerance = 0.2;  // times the sequence std
inline constexpr int kLzLevels = 8;

/// All CAMIA signals, member-oriented. `gamma` defaults to the sequence's own
/// mean loss.
inline CamiaFeatures camia_features(std::span<const double> losses,
                                    std::optional<std::span<const double>> repeated = std::nullopt,
                                    std::optional<double> gamma = std::nullopt) {
  require(losses.size() >= 3, ErrorKind::kNumerical, "camia_features: need at least 3 tokens");
  CamiaFeatures f;
  f.slope = -least_squares_slope(losses);

  const double mean = loss_score(losses);
  double ss = 0.0;
  for (double v : losses) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(losses.size()));
  f.apen = -approximate_entropy(losses, kApenEmbedding, kApenTolerance * sd) + 0.0;
  f.lz = -static_cast<double>(lz76_complexity(quantize_uniform(losses, kLzLevels)));

  const double threshold = gamma.value_or(mean);
  std::size_t below = 0;
  for (double v : losses) below += v < threshold ? 1 : 0;
  f.count_below = static_cast<double>(below) / static_cast<double>(losses.size());

  if (repeated) f.rep_amp = -(mean - loss_score(*repeated));
  return f;
}

// ---------------------------------------------------------------------------
// Block transforms.

/// Per-token mean over the repeats of every masked token, in token order.
/// Each repeat list is summed in sorted order so the result does not depend on
/// the order of the draws.
inline std::vector<double> average_repeats(std::span<const LossRepeats> block) {
  std::vector<double> out;
  std::optional<std::size_t> repeats;
  for (const auto& tok : block) {
    if (!tok.mask_flag) continue;
    require(!tok.losses.empty(), ErrorKind::kInput, "average_repeats: masked token without losses");
    if (repeats) {
      require(*repeats == tok.losses.size(), ErrorKind::kInput, "average_repeats: ragged repeat counts");
    }
    repeats = tok.losses.size();
    std::vector<double> sorted = tok.losses;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    out.push_back(sum / static_cast<double>(sorted.size()));
  }
  return out;
}

/// Conditional-minus-unconditional view of a sample. Discrete traces use the
/// stored DiffTokenStats (or just the true-token difference when only the two
/// blocks are present); continuous traces give -(cond loss - uncond loss).
inline TokenBlock cfg_diff_transform(const SampleTrace& s, Mode mode) {
  if (mode == Mode::kDiscrete) {
    if (s.diff) return TokenBlock::from_diff(*s.diff);
    require(s.uncond.has_value(), ErrorKind::kInput,
            "cfg_diff_transform: sample '" + s.sample_id + "' has no uncond block");
    TokenBlock b;
    for (std::size_t t = 0; t < s.cond.size(); ++t) {
      b.loglik.push_back(s.cond[t].loglik_true - (*s.uncond)[t].loglik_true);
    }
    return b;
  }
  require(s.uncond_loss.has_value(), ErrorKind::kInput,
          "cfg_diff_transform: sample '" + s.sample_id + "' has no uncond block");
  const auto cond = average_repeats(s.cond_loss);
  const auto uncond = average_repeats(*s.uncond_loss);
  require(cond.size() == uncond.size(), ErrorKind::kInput,
          "cfg_diff_transform: cond/uncond masks differ for '" + s.sample_id + "'");
  TokenBlock b;
  for (std::size_t t = 0; t < cond.size(); ++t) b.loglik.push_back(-(cond[t] - uncond[t]));
  return b;
}

// ---------------------------------------------------------------------------
// Attack identifiers.

enum class AttackName {
  kLoss,
  kZlib,
  kHinge,
  kMinK,
  kMinKpp,
  kSurp,
  kCamiaSlope,
  kCamiaApen,
  kCamiaLz,
  kCamiaCountBelow,
  kCamiaRepAmp,
};

enum class Variant { kCond, kDiff, kLossCond, kLossDiff };

inline constexpr std::array<AttackName, 11> kAllAttacks = {
    AttackName::kLoss,       AttackName::kZlib,       AttackName::kHinge,
    AttackName::kMinK,       AttackName::kMinKpp,     AttackName::kSurp,
    AttackName::kCamiaSlope, AttackName::kCamiaApen,  AttackName::kCamiaLz,
    AttackName::kCamiaCountBelow, AttackName::kCamiaRepAmp};

inline constexpr std::array<double, 5> kKGrid = {10, 20, 30, 40, 50};
inline constexpr std::array<double, 4> kEntropyGrid = {2, 4, 8, 16};

inline std::string to_string(AttackName n) {
  switch (n) {
    case AttackName::kLoss: return "loss";
    case AttackName::kZlib: return "zlib";
    case AttackName::kHinge: return "hinge";
    case AttackName::kMinK: return "min_k";
    case AttackName::kMinKpp: return "min_k_pp";
    case AttackName::kSurp: return "surp";
    case AttackName::kCamiaSlope: return "camia_slope";
    case AttackName::kCamiaApen: return "camia_apen";
    case AttackName::kCamiaLz: return "camia_lz";
    case AttackName::kCamiaCountBelow: return "camia_count_below";
    case AttackName::kCamiaRepAmp: return "camia_rep_amp";
  }
  return "?";
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kCond: return "cond";
    case Variant::kDiff: return "diff";
    case Variant::kLossCond: return "loss_cond";
    case Variant::kLossDiff: return "loss_diff";
  }
  return "?";
}

inline AttackName parse_attack_name(const std::string& s) {
  for (AttackName n : kAllAttacks) {
    if (to_string(n) == s) return n;
  }
  fail(ErrorKind::kUsage, "unknown attack '" + s + "'");
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::kCond, Variant::kDiff, Variant::kLossCond, Variant::kLossDiff}) {
    if (to_string(v) == s) return v;
  }
  fail(ErrorKind::kUsage, "unknown attack variant '" + s + "'");
}

struct Hyperparams {
  double k_percent = 20;
  double eps_entropy = 4;
  std::optional<double> gamma;

  auto operator<=>(const Hyperparams&) const = default;
};

struct AttackId {
  AttackName name = AttackName::kLoss;
  Variant variant = Variant::kCond;
  Hyperparams hp;

  auto operator<=>(const AttackId&) const = default;

  bool uses_k() const {
    return name == AttackName::kMinK || name == AttackName::kMinKpp || name == AttackName::kSurp;
  }

  /// Only the hyperparameters the attack reads, e.g. "k=20;eps=4", or "-".
  std::string hyperparam_string() const {
    std::ostringstream os;
    if (uses_k()) os << "k=" << hp.k_percent;
    if (name == AttackName::kSurp) os << ";eps=" << hp.eps_entropy;
    if (name == AttackName::kCamiaCountBelow && hp.gamma) os << "gamma=" << format_real(*hp.gamma);
    const std::string s = os.str();
    return s.empty() ? "-" : s;
  }

  /// "name:variant[:hyperparams]", accepted back by parse_attack_id.
  std::string label() const {
    std::string s = to_string(name) + ":" + to_string(variant);
    const std::string hps = hyperparam_string();
    if (hps != "-") s += ":" + hps;
    return s;
  }
};

inline Hyperparams parse_hyperparams(const std::string& text) {
  Hyperparams hp;
  if (text.empty() || text == "-") return hp;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto eq = item.find('=');
    require(eq != std::string::npos, ErrorKind::kUsage, "bad hyperparameter '" + item + "'");
    const std::string key = item.substr(0, eq);
    double value = 0.0;
    try {
      value = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      fail(ErrorKind::kUsage, "bad hyperparameter value '" + item + "'");
    }
    if (key == "k") {
      hp.k_percent = value;
    } else if (key == "eps") {
      hp.eps_entropy = value;
    } else if (key == "gamma") {
      hp.gamma = value;
    } else {
      fail(ErrorKind::kUsage, "unknown hyperparameter '" + key + "'");
    }
  }
  return hp;
}

inline AttackId parse_attack_id(const std::string& label) {
  const auto a = label.find(':');
  require(a != std::string::npos, ErrorKind::kUsage,
          "attack must be written name:variant[:params], got '" + label + "'");
  const auto b = label.find(':', a + 1);
  AttackId id;
  id.name = parse_attack_name(label.substr(0, a));
  id.variant = parse_variant(label.substr(a + 1, b == std::string::npos ? std::string::npos : b - a - 1));
  if (b != std::string::npos) id.hp = parse_hyperparams(label.substr(b + 1));
  return id;
}

/// Reason the attack cannot run on traces of `mode`, or nullopt when it can.
inline std::optional<std::string> incompatibility(const AttackId& id, Mode mode) {
  const bool loss_variant = id.variant == Variant::kLossCond || id.variant == Variant::kLossDiff;
  if (mode == Mode::kDiscrete && loss_variant) {
    return id.label() + ": loss_* variants need continuous traces";
  }
  if (mode == Mode::kContinuous && !loss_variant) {
    return id.label() + ": continuous traces need a loss_* variant";
  }
  const bool needs_vocab = id.name == AttackName::kHinge || id.name == AttackName::kMinKpp ||
                           id.name == AttackName::kSurp;
  if (mode == Mode::kContinuous && (needs_vocab || id.name == AttackName::kZlib)) {
    return id.label() + ": needs discrete vocabulary statistics";
  }
  if (id.variant == Variant::kDiff && id.name == AttackName::kSurp) {
    return id.label() + ": the difference block has no entropy/quantiles";
  }
  if ((id.variant == Variant::kDiff || id.variant == Variant::kLossDiff) &&
      id.name == AttackName::kCamiaRepAmp) {
    return id.label() + ": no repeated pass for the difference block";
  }
  return std::nullopt;
}

/// Every compatible (attack, variant, hyperparameter) combination on the
/// standard grids: k in {10..50}, SURP entropy bound in {2,4,8,16}.
inline std::vector<AttackId> attack_grid(Mode mode, bool include_diff, bool include_repeated) {
  std::vector<AttackId> out;
  std::vector<Variant> variants;
  if (mode == Mode::kDiscrete) {
    variants = {Variant::kCond};
    if (include_diff) variants.push_back(Variant::kDiff);
  } else {
    variants = {Variant::kLossCond};
    if (include_diff) variants.push_back(Variant::kLossDiff);
  }
  for (Variant v : variants) {
    for (AttackName n : kAllAttacks) {
      if (n == AttackName::kCamiaRepAmp && !include_repeated) continue;
      AttackId base{n, v, {}};
      if (incompatibility(base, mode)) continue;
      if (n == AttackName::kSurp) {
        for (double k : kKGrid) {
          for (double e : kEntropyGrid) out.push_back({n, v, {k, e, std::nullopt}});
        }
      } else if (base.uses_k()) {
        for (double k : kKGrid) out.push_back({n, v, {k, 4, std::nullopt}});
      } else {
        out.push_back(base);
      }
    }
  }
  return out;
}

/// One attack per (name, variant) at default hyperparameters; the feature set
/// used for dataset inference.
inline std::vector<AttackId> default_feature_set(Mode mode, bool include_diff,
                                                 bool include_repeated) {
  std::vector<AttackId> out;
  for (const auto& id : attack_grid(mode, include_diff, include_repeated)) {
    if (id.uses_k() && id.hp.k_percent != 20) continue;
    if (id.name == AttackName::kSurp && id.hp.eps_entropy != 4) continue;
    out.push_back(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring a sample.

inline TokenBlock attack_block(const SampleTrace& s, Mode mode, Variant variant) {
  switch (variant) {
    case Variant::kCond:
      return TokenBlock::from_stats(s.cond);
    case Variant::kDiff:
    case Variant::kLossDiff:
      return cfg_diff_transform(s, mode);
    case Variant::kLossCond: {
      TokenBlock b;
      for (double l : average_repeats(s.cond_loss)) b.loglik.push_back(-l);
      return b;
    }
  }
  return {};
}

inline double score_sample(const SampleTrace& s, Mode mode, const AttackId& id) {
  if (auto why = incompatibility(id, mode)) fail(ErrorKind::kUsage, *why);
  const TokenBlock block = attack_block(s, mode, id.variant);
  std::vector<double> losses(block.size());
  for (std::size_t t = 0; t < block.size(); ++t) losses[t] = -block.loglik[t];

  switch (id.name) {
    case AttackName::kLoss:
      return loss_score(block.loglik);
    case AttackName::kZlib:
      return zlib_score(block.loglik, s.tokens);
    case AttackName::kHinge:
      return hinge_score(block);
    case AttackName::kMinK:
      return min_k_score(block.loglik, id.hp.k_percent);
    case AttackName::kMinKpp:
      return min_k_pp_score(block, id.hp.k_percent);
    case AttackName::kSurp:
      return surp_score(block, static_cast<int>(id.hp.k_percent), id.hp.eps_entropy);
    case AttackName::kCamiaSlope:
      return camia_features(losses, std::nullopt, id.hp.gamma).slope;
    case AttackName::kCamiaApen:
      return camia_features(losses, std::nullopt, id.hp.gamma).apen;
    case AttackName::kCamiaLz:
      return camia_features(losses, std::nullopt, id.hp.gamma).lz;
    case AttackName::kCamiaCountBelow:
      return camia_features(losses, std::nullopt, id.hp.gamma).count_below;
    case AttackName::kCamiaRepAmp: {
      std::vector<double> second;
      if (mode == Mode::kDiscrete) {
        require(s.repeated_pass.has_value(), ErrorKind::kInput,
                "camia_rep_amp: sample '" + s.sample_id + "' has no repeated_pass block");
        for (const auto& st : *s.repeated_pass) second.push_back(-st.loglik_true);
      } else {
        require(s.repeated_pass_loss.has_value(), ErrorKind::kInput,
                "camia_rep_amp: sample '" + s.sample_id + "' has no repeated_pass block");
        second = average_repeats(*s.repeated_pass_loss);
      }
      return *camia_features(losses, std::span<const double>(second), id.hp.gamma).rep_amp;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Score tables.

struct ScoreRow {
  std::string sample_id;
  Split split = Split::kMember;
  AttackId attack;
  double value = 0.0;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
  std::vector<std::string> warnings;

  std::vector<AttackId> attacks() const {
    std::vector<AttackId> ids;
    for (const auto& r : rows) ids.push_back(r.attack);
    std::sort(ids.begin(), ids.end(), [](const AttackId& a, const AttackId& b) {
      return a.label() < b.label();
    });
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }

  /// Finite scores of one attack for one split.
  std::vector<double> values(const AttackId& id, Split split) const {
    std::vector<double> out;
    for (const auto& r : rows) {
      if (r.split == split && r.attack == id && std::isfinite(r.value)) out.push_back(r.value);
    }
    return out;
  }
};

/// Scores every sample under every compatible attack. Rows are ordered by
/// (sample_id, attack label). Incompatible attacks are skipped with a warning;
/// per-sample failures store NaN and are summarized in the warnings.
inline ScoreTable score_all(const TraceFile& trace, const std::vector<AttackId>& attacks,
                            int threads = 1) {
  ScoreTable table;
  std::vector<AttackId> runnable;
  for (const auto& id : attacks) {
    if (auto why = incompatibility(id, trace.header.mode)) {
      table.warnings.push_back("skipped " + *why);
    } else {
      runnable.push_back(id);
    }
  }
  std::sort(runnable.begin(), runnable.end(),
            [](const AttackId& a, const AttackId& b) { return a.label() < b.label(); });
  runnable.erase(std::unique(runnable.begin(), runnable.end()), runnable.end());
  if (runnable.empty()) return table;

  std::vector<std::size_t> order(trace.samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return trace.samples[a].sample_id < trace.samples[b].sample_id;
  });

  const std::size_t na = runnable.size();
  std::vector<double> values(order.size() * na);
  std::vector<std::string> errors(order.size() * na);
  parallel_for(order.size(), threads, [&](std::size_t i) {
    const SampleTrace& s = trace.samples[order[i]];
    for (std::size_t a = 0; a < na; ++a) {
      try {
        values[i * na + a] = score_sample(s, trace.header.mode, runnable[a]);
      } catch (const Error& e) {
        values[i * na + a] = std::numeric_limits<double>::quiet_NaN();
        errors[i * na + a] = e.what();
      }
    }
  });

  std::map<std::string, std::pair<std::size_t, std::string>> failures;
  table.rows.reserve(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const SampleTrace& s = trace.samples[order[i]];
    for (std::size_t a = 0; a < na; ++a) {
      table.rows.push_back({s.sample_id, s.split, runnable[a], values[i * na + a]});
      if (!errors[i * na + a].empty()) {
        auto& f = failures[runnable[a].label()];
        if (f.first++ == 0) f.second = errors[i * na + a];
      }
    }
  }
  for (const auto& [label, f] : failures) {
    table.warnings.push_back(label + " failed on " + std::to_string(f.first) +
                             " samples (first: " + f.second + ")");
  }
  return table;
}

inline void write_scores_csv(const std::string& path, const ScoreTable& table) {
  LineWriter out(path);
  out.write_line("sample_id,split,attack,variant,hyperparams,value");
  for (const auto& r : table.rows) {
    out.write_line(r.sample_id + "," + to_string(r.split) + "," + to_string(r.attack.name) + "," +
                   to_string(r.attack.variant) + "," + r.attack.hyperparam_string() + "," +
                   format_real(r.value));
  }
  out.close();
}

inline ScoreTable read_scores_csv(const std::string& path) {
  LineReader in(path);
  auto header = in.next();
  require(header && *header == "sample_id,split,attack,variant,hyperparams,value",
          ErrorKind::kInput, path + ": not a score table");
  ScoreTable table;
  while (auto line = in.next()) {
    if (line->empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(*line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    const std::string where = path + ":" + std::to_string(in.line_number()) + ": ";
    require(f.size() == 6, ErrorKind::kInput, where + "expected 6 columns");
    try {
      ScoreRow r;
      r.sample_id = f[0];
      r.split = parse_split(f[1]);
      r.attack.name = parse_attack_name(f[2]);
      r.attack.variant = parse_variant(f[3]);
      r.attack.hp = parse_hyperparams(f[4]);
      r.value = std::stod(f[5]);
      table.rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      fail(ErrorKind::kInput, where + e.what());
    }
  }
  return table;
}

}  // namespace iaraudit
