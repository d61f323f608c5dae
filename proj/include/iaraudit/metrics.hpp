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

// Evaluation metrics for member-oriented scores: ROC, AUC, TPR at a fixed FPR,
// randomized-trial summaries and correlations. Scores at or above a threshold
// are predicted "member"; no interpolation is ever applied.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "iaraudit/common.hpp"

namespace iaraudit {

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Points from (0,0) at threshold +inf down to (1,1) at the smallest score.
using RocCurve = std::vector<RocPoint>;

namespace detail {

inline void require_scores(std::span<const double> members, std::span<const double> nonmembers) {
  require(!members.empty() && !nonmembers.empty(), ErrorKind::kNumerical,
          "metric needs non-empty member and nonmember score sets");
}

}  // namespace detail

inline RocCurve roc_curve(std::span<const double> members, std::span<const double> nonmembers) {
  detail::require_scores(members, nonmembers);
  std::vector<double> m(members.begin(), members.end());
  std::vector<double> n(nonmembers.begin(), nonmembers.end());
  std::sort(m.begin(), m.end(), std::greater<>());
  std::sort(n.begin(), n.end(), std::greater<>());
  std::vector<double> thresholds;
  thresholds.reserve(m.size() + n.size());
  std::merge(m.begin(), m.end(), n.begin(), n.end(), std::back_inserter(thresholds), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  RocCurve curve;
  curve.reserve(thresholds.size() + 1);
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t im = 0, in = 0;
  for (double th : thresholds) {
    while (im < m.size() && m[im] >= th) ++im;
    while (in < n.size() && n[in] >= th) ++in;
    curve.push_back({th, static_cast<double>(in) / static_cast<double>(n.size()),
                     static_cast<double>(im) / static_cast<double>(m.size())});
  }
  return curve;
}

/// Best TPR over thresholds whose empirical FPR does not exceed the target.
inline double tpr_at_fpr(std::span<const double> members, std::span<const double> nonmembers,
                         double fpr_target = 0.01) {
  require(fpr_target > 0.0 && fpr_target < 1.0, ErrorKind::kUsage, "fpr_target must lie in (0,1)");
  double best = 0.0;
  for (const auto& p : roc_curve(members, nonmembers)) {
    if (p.fpr <= fpr_target) best = std::max(best, p.tpr);
  }
  return best;
}

/// Mann-Whitney U / (n_m * n_n) with ties counted one half.
inline double auc(std::span<const double> members, std::span<const double> nonmembers) {
  detail::require_scores(members, nonmembers);
  struct Item {
    double v;
    bool member;
  };
  std::vector<Item> all;
  all.reserve(members.size() + nonmembers.size());
  for (double v : members) all.push_back({v, true});
  for (double v : nonmembers) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });
  // Midranks (doubled to stay integral): rank sum of members.
  double rank_sum2 = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t members_in_tie = 0;
    while (j < all.size() && all[j].v == all[i].v) {
      members_in_tie += all[j].member ? 1 : 0;
      ++j;
    }
    const double mid2 = static_cast<double>(i + 1 + j);  // 2 * average 1-based rank
    rank_sum2 += mid2 * static_cast<double>(members_in_tie);
    i = j;
  }
  const double nm = static_cast<double>(members.size());
  const double nn = static_cast<double>(nonmembers.size());
  const double u = rank_sum2 / 2.0 - nm * (nm + 1.0) / 2.0;
  return u / (nm * nn);
}

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population std over trials
  int trials = 0;
  double subsample_fraction = 0.0;
};

using MetricFn = std::function<double(std::span<const double>, std::span<const double>)>;

inline MetricFn tpr_at_fpr_metric(double fpr_target = 0.01) {
  return [fpr_target](std::span<const double> m, std::span<const double> n) {
    return tpr_at_fpr(m, n, fpr_target);
  };
}

inline MetricFn auc_metric() {
  return [](std::span<const double> m, std::span<const double> n) { return auc(m, n); };
}

/// Mean and std of `metric` over independent subsampling trials. Each trial
/// draws floor(fraction * n) members and nonmembers without replacement from
/// its own stream (seed, trial). Inputs are put in canonical (sorted) order
/// first, so the result does not depend on the order of the given scores.
inline MetricSummary randomized_metric(std::span<const double> members,
                                       std::span<const double> nonmembers, const MetricFn& metric,
                                       int trials = 100, double subsample_fraction = 0.5,
                                       std::uint64_t seed = 0, int threads = 1) {
  require(trials >= 1, ErrorKind::kUsage, "trials must be >= 1");
  require(subsample_fraction > 0.0 && subsample_fraction <= 1.0, ErrorKind::kUsage,
          "subsample fraction must lie in (0,1]");
  std::vector<double> m(members.begin(), members.end());
  std::vector<double> n(nonmembers.begin(), nonmembers.end());
  std::sort(m.begin(), m.end());
  std::sort(n.begin(), n.end());
  const auto km = static_cast<std::size_t>(std::floor(subsample_fraction * static_cast<double>(m.size())));
  const auto kn = static_cast<std::size_t>(std::floor(subsample_fraction * static_cast<double>(n.size())));
  require(km >= 2 && kn >= 2, ErrorKind::kNumerical, "subsample smaller than 2 per side");

  std::vector<double> results(static_cast<std::size_t>(trials));
  parallel_for(results.size(), threads, [&](std::size_t t) {
    Rng rng = make_stream(seed, hash_string("randomized_metric"), t);
    std::vector<double> sm, sn;
    sm.reserve(km);
    sn.reserve(kn);
    for (std::size_t i : sample_without_replacement(m.size(), km, rng)) sm.push_back(m[i]);
    for (std::size_t i : sample_without_replacement(n.size(), kn, rng)) sn.push_back(n[i]);
    results[t] = metric(sm, sn);
  });

  MetricSummary s;
  s.trials = trials;
  s.subsample_fraction = subsample_fraction;
  for (double r : results) s.mean += r;
  s.mean /= static_cast<double>(trials);
  for (double r : results) s.std += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(trials));
  return s;
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size() && xs.size() >= 2, ErrorKind::kUsage,
          "pearson needs two equal-length samples of size >= 2");
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, ErrorKind::kNumerical, "pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Average ranks (1-based, ties share their mean rank).
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && xs[idx[j]] == xs[idx[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = r;
    i = j;
  }
  return ranks;
}

inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  return pearson(average_ranks(xs), average_ranks(ys));
}

}  // namespace iaraudit
