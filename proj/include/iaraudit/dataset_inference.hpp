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

// Dataset inference: MIA scores as features, min-max scaling over the pooled
// suspect + validation rows, per-sample sums, and a one-sided Welch test of
// H0: mean(suspect) <= mean(validation). No classifier is trained.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "iaraudit/attacks.hpp"
#include "iaraudit/common.hpp"
#include "iaraudit/student_t.hpp"

namespace iaraudit {

/// Rows are samples, columns are member-oriented attack scores. The first
/// `num_suspect` rows belong to the suspect set P, the rest to validation U.
struct FeatureMatrix {
  std::vector<std::string> columns;
  std::vector<std::string> row_ids;
  std::vector<std::vector<double>> rows;
  std::size_t num_suspect = 0;

  std::size_t num_validation() const { return rows.size() - num_suspect; }
};

struct BuildResult {
  FeatureMatrix features;
  std::vector<std::string> warnings;
};

/// Dense features for the given ids. Attacks with any non-finite value among
/// the selected rows are dropped with a warning.
inline BuildResult build_features(const ScoreTable& table, const std::vector<std::string>& suspect_ids,
                                  const std::vector<std::string>& validation_ids,
                                  const std::vector<AttackId>& attacks = {}) {
  std::vector<AttackId> selected = attacks.empty() ? table.attacks() : attacks;
  std::map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < selected.size(); ++c) column_of[selected[c].label()] = c;

  std::map<std::string, std::vector<double>> by_sample;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : table.rows) {
    auto it = column_of.find(r.attack.label());
    if (it == column_of.end()) continue;
    auto& row = by_sample[r.sample_id];
    if (row.empty()) row.assign(selected.size(), nan);
    row[it->second] = r.value;
  }

  BuildResult out;
  std::vector<const std::vector<double>*> source;
  for (const auto* ids : {&suspect_ids, &validation_ids}) {
    for (const auto& id : *ids) {
      auto it = by_sample.find(id);
      require(it != by_sample.end(), ErrorKind::kInput, "sample '" + id + "' missing from score table");
      source.push_back(&it->second);
    }
  }

  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < selected.size(); ++c) {
    bool finite = true;
    for (const auto* row : source) finite = finite && std::isfinite((*row)[c]);
    if (finite) {
      keep.push_back(c);
    } else {
      out.warnings.push_back("dropped attack " + selected[c].label() + ": non-finite or missing values");
    }
  }
  require(!keep.empty(), ErrorKind::kNumerical, "no usable attack columns after dropping");

  FeatureMatrix& f = out.features;
  for (std::size_t c : keep) f.columns.push_back(selected[c].label());
  f.num_suspect = suspect_ids.size();
  f.row_ids = suspect_ids;
  f.row_ids.insert(f.row_ids.end(), validation_ids.begin(), validation_ids.end());
  for (const auto* row : source) {
    std::vector<double> r;
    r.reserve(keep.size());
    for (std::size_t c : keep) r.push_back((*row)[c]);
    f.rows.push_back(std::move(r));
  }
  return out;
}

/// Min-max scales every column to [0,1] over all rows (constant columns map to
/// 0.5) and sums each row.
inline std::vector<double> normalize_and_aggregate(const std::vector<std::vector<double>>& rows) {
  require(rows.size() >= 2, ErrorKind::kNumerical, "normalize_and_aggregate needs at least 2 rows");
  const std::size_t cols = rows.front().size();
  std::vector<double> lo(cols, std::numeric_limits<double>::infinity());
  std::vector<double> hi(cols, -std::numeric_limits<double>::infinity());
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < cols; ++c) {
      lo[c] = std::min(lo[c], r[c]);
      hi[c] = std::max(hi[c], r[c]);
    }
  }
  std::vector<double> scores(rows.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      sum += hi[c] > lo[c] ? (rows[i][c] - lo[c]) / (hi[c] - lo[c]) : 0.5;
    }
    scores[i] = sum;
  }
  return scores;
}

inline std::vector<double> normalize_and_aggregate(const FeatureMatrix& f) {
  return normalize_and_aggregate(f.rows);
}

struct DiReport {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
  double alpha = 0.01;
  bool rejected = false;
  bool degenerate = false;  // both samples had zero variance
  std::vector<double> suspect_scores;
  std::vector<double> validation_scores;
};

/// One-sided Welch test of H0: mean(a) <= mean(b).
inline DiReport welch_one_sided(std::span<const double> a, std::span<const double> b,
                                double alpha = 0.01) {
  require(a.size() >= 2 && b.size() >= 2, ErrorKind::kNumerical,
          "welch test needs at least 2 samples per side");
  auto moments = [](std::span<const double> x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / static_cast<double>(x.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());

  DiReport r;
  r.alpha = alpha;
  r.suspect_scores.assign(a.begin(), a.end());
  r.validation_scores.assign(b.begin(), b.end());
  const double sa = va / na;
  const double sb = vb / nb;
  if (sa + sb == 0.0) {
    r.degenerate = true;
    r.rejected = ma > mb;
    r.p_value = r.rejected ? 0.0 : 1.0;
    r.t_statistic = ma > mb   ? std::numeric_limits<double>::infinity()
                    : ma < mb ? -std::numeric_limits<double>::infinity()
                              : 0.0;
    r.degrees_of_freedom = na + nb - 2.0;
    return r;
  }
  r.t_statistic = (ma - mb) / std::sqrt(sa + sb);
  r.degrees_of_freedom = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  r.p_value = std::clamp(student_t_upper_tail(r.t_statistic, r.degrees_of_freedom), 0.0, 1.0);
  r.rejected = r.p_value < alpha;
  return r;
}

/// Default sample-count grid, truncated to `max_p`.
inline std::vector<int> default_di_grid(int max_p) {
  std::vector<int> grid;
  for (int p : {2, 4, 6, 8, 10, 20, 30, 40, 60, 80, 100, 200, 300, 400, 600, 800, 1000, 2000,
                3000, 4000, 6000, 8000, 10000}) {
    if (p <= max_p) grid.push_back(p);
  }
  return grid;
}

struct MinimalPResult {
  std::optional<int> p_min;  // nullopt: not found on the grid
  std::vector<int> grid;
  std::vector<double> rejection_rate;
  int trials = 0;
  double alpha = 0.01;
  double required_rate = 0.95;
};

/// Rejection rate of the DI test at each grid size P; p_min is the smallest P
/// whose rate reaches `required_rate`. Trial (g, t) draws P suspect and P
/// validation rows without replacement from stream (seed, g, t).
inline MinimalPResult minimal_p_search(const FeatureMatrix& features, const std::vector<int>& grid,
                                       int trials = 100, double alpha = 0.01,
                                       double required_rate = 0.95, std::uint64_t seed = 0,
                                       int threads = 1) {
  require(trials >= 1, ErrorKind::kUsage, "trials must be >= 1");
  require(!grid.empty(), ErrorKind::kUsage, "empty DI grid");
  const std::size_t np = features.num_suspect;
  const std::size_t nu = features.num_validation();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    require(grid[g] >= 2, ErrorKind::kUsage, "DI grid values must be >= 2");
    require(g == 0 || grid[g] > grid[g - 1], ErrorKind::kUsage, "DI grid must be increasing");
    require(static_cast<std::size_t>(grid[g]) <= std::min(np, nu), ErrorKind::kUsage,
            "DI grid value " + std::to_string(grid[g]) + " exceeds available samples");
  }

  MinimalPResult result;
  result.grid = grid;
  result.trials = trials;
  result.alpha = alpha;
  result.required_rate = required_rate;

  const std::size_t jobs = grid.size() * static_cast<std::size_t>(trials);
  std::vector<char> rejected(jobs, 0);
  parallel_for(jobs, threads, [&](std::size_t job) {
    const std::size_t g = job / static_cast<std::size_t>(trials);
    const std::size_t t = job % static_cast<std::size_t>(trials);
    const auto p = static_cast<std::size_t>(grid[g]);
    Rng rng = make_stream(seed, hash_string("minimal_p_search"), g, t);
    std::vector<std::vector<double>> rows;
    rows.reserve(2 * p);
    for (std::size_t i : sample_without_replacement(np, p, rng)) rows.push_back(features.rows[i]);
    for (std::size_t i : sample_without_replacement(nu, p, rng)) rows.push_back(features.rows[np + i]);
    const auto scores = normalize_and_aggregate(rows);
    const auto split = scores.begin() + static_cast<std::ptrdiff_t>(p);
    const DiReport rep = welch_one_sided(std::span<const double>(scores.begin(), split),
                                         std::span<const double>(split, scores.end()), alpha);
    rejected[job] = rep.rejected ? 1 : 0;
  });

  for (std::size_t g = 0; g < grid.size(); ++g) {
    int count = 0;
    for (int t = 0; t < trials; ++t) count += rejected[g * static_cast<std::size_t>(trials) + t];
    const double rate = static_cast<double>(count) / trials;
    result.rejection_rate.push_back(rate);
    if (!result.p_min && rate >= required_rate) result.p_min = grid[g];
  }
  return result;
}

}  // namespace iaraudit
