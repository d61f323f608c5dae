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

// Reduction of full vocabulary distributions to the per-token statistics
// stored in traces.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "iaraudit/trace.hpp"

namespace iaraudit {

/// Normalizes arbitrary logits into log-probabilities.
inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double hi = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - hi);
  const double lse = hi + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

/// Nearest-rank k-th percentile of the values (ascending sort, rank ceil(k/100 * n)).
inline double nearest_rank_percentile(std::vector<double> values, int k) {
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(k / 100.0 * static_cast<double>(n) - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return values[rank - 1];
}

/// Statistics of a normalized log-probability vector for realized token `truth`.
inline TokenStats compute_token_stats(std::span<const double> logp, int truth) {
  const auto v = logp.size();
  TokenStats s;
  s.loglik_true = std::min(0.0, logp[static_cast<std::size_t>(truth)]);
  double max_other = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    if (static_cast<int>(i) != truth) max_other = std::max(max_other, logp[i]);
    sum += logp[i];
  }
  s.max_other_loglik = std::min(0.0, max_other);
  s.vocab_mean = sum / static_cast<double>(v);
  double ss = 0.0;
  double entropy = 0.0;
  std::vector<double> probs(v);
  for (std::size_t i = 0; i < v; ++i) {
    const double d = logp[i] - s.vocab_mean;
    ss += d * d;
    probs[i] = std::exp(logp[i]);
    if (probs[i] > 0.0) entropy -= probs[i] * logp[i];
  }
  s.vocab_std = std::sqrt(ss / static_cast<double>(v));
  s.entropy = std::clamp(entropy, 0.0, std::log(static_cast<double>(v)));
  std::sort(probs.begin(), probs.end());
  for (std::size_t q = 0; q < kQuantileLevels.size(); ++q) {
    auto rank = static_cast<std::size_t>(
        std::ceil(kQuantileLevels[q] / 100.0 * static_cast<double>(v) - 1e-12));
    rank = std::clamp<std::size_t>(rank, 1, v);
    s.prob_quantiles[q] = std::min(1.0, probs[rank - 1]);
  }
  return s;
}

/// Statistics of the per-entry difference log p(.|c) - log p(.|c_null).
inline DiffTokenStats compute_diff_stats(std::span<const double> logp_cond,
                                         std::span<const double> logp_uncond, int truth) {
  const auto v = logp_cond.size();
  DiffTokenStats d;
  double max_other = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  std::vector<double> diff(v);
  for (std::size_t i = 0; i < v; ++i) {
    diff[i] = logp_cond[i] - logp_uncond[i];
    sum += diff[i];
    if (static_cast<int>(i) != truth) max_other = std::max(max_other, diff[i]);
  }
  d.diff_true = diff[static_cast<std::size_t>(truth)];
  d.diff_max_other = max_other;
  d.diff_mean = sum / static_cast<double>(v);
  double ss = 0.0;
  for (double x : diff) ss += (x - d.diff_mean) * (x - d.diff_mean);
  d.diff_std = std::sqrt(ss / static_cast<double>(v));
  return d;
}

}  // namespace iaraudit
