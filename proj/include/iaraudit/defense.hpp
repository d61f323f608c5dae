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

// Output-noise mitigation: Gaussian noise on next-token logits (discrete) or on
// predicted noise and predicted tokens (continuous), and the privacy/utility
// sweep that re-runs the audits through the noised model.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "iaraudit/attacks.hpp"
#include "iaraudit/common.hpp"
#include "iaraudit/dataset_inference.hpp"
#include "iaraudit/extraction.hpp"
#include "iaraudit/metrics.hpp"
#include "iaraudit/oracle.hpp"

namespace iaraudit {

enum class NoiseTarget { kLogits, kTokens };

struct DefenseConfig {
  double sigma = 0.0;
  NoiseTarget target = NoiseTarget::kLogits;
  std::uint64_t seed = 0;
};

namespace detail {

inline void add_noise(std::span<double> v, double sigma, std::uint64_t key) {
  Rng rng(key);
  std::normal_distribution<double> normal(0.0, sigma);
  for (double& x : v) x += normal(rng);
}

}  // namespace detail

/// Noise on every logit vector, keyed by (seed, class, context, position) so a
/// repeated query sees the same noisy model.
class NoisyDiscreteOracle : public DiscreteOracle {
 public:
  NoisyDiscreteOracle(const DiscreteOracle& base, DefenseConfig config) : base_(base), config_(config) {
    require(config.sigma >= 0.0, ErrorKind::kUsage, "sigma must be >= 0");
    require(config.target == NoiseTarget::kLogits, ErrorKind::kUsage,
            "discrete models take noise on logits");
  }

  int vocab() const override { return base_.vocab(); }
  int seq_len() const override { return base_.seq_len(); }
  bool has_unconditional() const override { return base_.has_unconditional(); }

  std::vector<double> next_logits(std::span<const int> context, int class_label) const override {
    auto logits = base_.next_logits(context, class_label);
    if (config_.sigma > 0.0) {
      detail::add_noise(logits, config_.sigma,
                        mix_keys(config_.seed, hash_string("logit_noise"),
                                 static_cast<std::uint64_t>(class_label + 1), hash_tokens(context),
                                 context.size()));
    }
    return logits;
  }

 private:
  const DiscreteOracle& base_;
  DefenseConfig config_;
};

/// Noise on predicted noise vectors (keyed by query) and on predicted tokens
/// (keyed by visible content and position).
class NoisyContinuousOracle : public ContinuousOracle {
 public:
  NoisyContinuousOracle(const ContinuousOracle& base, DefenseConfig config) : base_(base), config_(config) {
    require(config.sigma >= 0.0, ErrorKind::kUsage, "sigma must be >= 0");
    require(config.target == NoiseTarget::kTokens, ErrorKind::kUsage,
            "continuous models take noise on tokens");
  }

  int token_dim() const override { return base_.token_dim(); }
  int seq_len() const override { return base_.seq_len(); }
  bool has_unconditional() const override { return base_.has_unconditional(); }
  int diffusion_steps() const override { return base_.diffusion_steps(); }
  double alpha_bar(int s) const override { return base_.alpha_bar(s); }

  Vectors conditioning(const Vectors& tokens, const std::vector<char>& mask, int class_label) const override {
    return base_.conditioning(tokens, mask, class_label);
  }

  std::vector<double> predict_noise(std::span<const double> noised, std::span<const double> cond, int timestep,
                                    std::uint64_t key) const override {
    auto eps = base_.predict_noise(noised, cond, timestep, key);
    if (config_.sigma > 0.0) {
      detail::add_noise(eps, config_.sigma, mix_keys(config_.seed, hash_string("eps_noise"), key));
    }
    return eps;
  }

  Vectors predict_masked(const Vectors& tokens, const std::vector<char>& mask, int class_label) const override {
    Vectors out = base_.predict_masked(tokens, mask, class_label);
    if (config_.sigma > 0.0) {
      Vectors visible = tokens;
      for (std::size_t p = 0; p < visible.size(); ++p) {
        if (mask[p]) std::fill(visible[p].begin(), visible[p].end(), 0.0);
      }
      const std::uint64_t content = hash_vectors(visible);
      for (std::size_t p = 0; p < out.size(); ++p) {
        if (!mask[p]) continue;
        detail::add_noise(out[p], config_.sigma,
                          mix_keys(config_.seed, hash_string("token_noise"),
                                   static_cast<std::uint64_t>(class_label + 1), content, p));
      }
    }
    return out;
  }

 private:
  const ContinuousOracle& base_;
  DefenseConfig config_;
};

inline std::unique_ptr<DiscreteOracle> wrap_with_noise(const DiscreteOracle& base, DefenseConfig config) {
  return std::make_unique<NoisyDiscreteOracle>(base, config);
}

inline std::unique_ptr<ContinuousOracle> wrap_with_noise(const ContinuousOracle& base, DefenseConfig config) {
  return std::make_unique<NoisyContinuousOracle>(base, config);
}

// ---------------------------------------------------------------------------
// Privacy/utility sweep.

struct SweepOptions {
  std::vector<double> sigmas = {0.0, 0.5, 1.0, 2.0, 4.0};
  std::vector<AttackId> attacks;  // default feature set when empty
  DiscreteExportOptions discrete;
  ContinuousExportOptions continuous;
  int trials = 100;
  double fpr_target = 0.01;
  double alpha = 0.01;
  std::vector<int> di_grid;  // default grid when empty
  int prefix_length = 0;     // per-mode default when 0
  double tau = kDefaultTau;
  int top_n = kDefaultTopN;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SweepPoint {
  double sigma = 0.0;
  MetricSummary tpr_at_1fpr;
  std::string best_attack;
  std::optional<int> di_p_min;
  int extracted_count = 0;
  double utility_proxy = 0.0;  // mean held-out NLL (discrete) or denoising loss (continuous)
};

namespace detail {

/// Attack with the best mean randomized TPR; the first label wins ties.
inline std::pair<AttackId, MetricSummary> best_attack(const ScoreTable& table, const SweepOptions& opt) {
  std::optional<std::pair<AttackId, MetricSummary>> best;
  for (const auto& id : table.attacks()) {
    const auto m = table.values(id, Split::kMember);
    const auto n = table.values(id, Split::kNonmember);
    if (m.size() < 4 || n.size() < 4) continue;
    const auto s = randomized_metric(m, n, tpr_at_fpr_metric(opt.fpr_target), opt.trials, 0.5, opt.seed,
                                     opt.threads);
    if (!best || s.mean > best->second.mean) best = {id, s};
  }
  require(best.has_value(), ErrorKind::kNumerical, "sweep: no attack produced scores");
  return *best;
}

inline std::optional<int> sweep_di(const ScoreTable& table, const std::vector<LabeledSequence>& samples,
                                   const std::vector<AttackId>& attacks, const SweepOptions& opt) {
  std::vector<std::string> suspect, validation;
  for (const auto& s : samples) (s.split == Split::kMember ? suspect : validation).push_back(s.sample_id);
  const auto built = build_features(table, suspect, validation, attacks);
  const int max_p = static_cast<int>(std::min(suspect.size(), validation.size()));
  const auto grid = opt.di_grid.empty() ? default_di_grid(max_p) : opt.di_grid;
  return minimal_p_search(built.features, grid, opt.trials, opt.alpha, 0.95, opt.seed, opt.threads).p_min;
}

}  // namespace detail

/// Re-runs scoring, DI, extraction and the utility proxy under each sigma.
/// `samples` holds the member (training) and nonmember samples.
template <typename Oracle>
std::vector<SweepPoint> sweep(const Oracle& base, const std::vector<LabeledSequence>& samples,
                              const SweepOptions& opt) {
  constexpr bool discrete = std::is_base_of_v<DiscreteOracle, Oracle>;
  const Mode mode = discrete ? Mode::kDiscrete : Mode::kContinuous;
  for (std::size_t i = 0; i < opt.sigmas.size(); ++i) {
    require(opt.sigmas[i] >= 0.0, ErrorKind::kUsage, "sigmas must be >= 0");
    require(i == 0 || opt.sigmas[i] > opt.sigmas[i - 1], ErrorKind::kUsage, "sigmas must be ascending");
  }
  std::vector<LabeledSequence> members;
  for (const auto& s : samples) {
    if (s.split == Split::kMember) members.push_back(s);
  }

  std::vector<SweepPoint> points;
  for (double sigma : opt.sigmas) {
    DefenseConfig cfg{sigma, discrete ? NoiseTarget::kLogits : NoiseTarget::kTokens, opt.seed};
    const auto noisy = wrap_with_noise(base, cfg);
    TraceFile trace;
    std::vector<AttackId> attacks = opt.attacks;
    if constexpr (discrete) {
      trace = export_discrete_traces(*noisy, samples, opt.discrete, opt.seed, json::object(), opt.threads);
      if (attacks.empty()) {
        attacks = default_feature_set(mode, opt.discrete.include_diff, opt.discrete.include_repeated);
      }
    } else {
      trace = export_continuous_traces(*noisy, samples, opt.continuous, json::object(), opt.threads);
      if (attacks.empty()) {
        attacks = default_feature_set(mode, opt.continuous.include_uncond, opt.continuous.include_repeated);
      }
    }
    const ScoreTable table = score_all(trace, attacks, opt.threads);

    SweepPoint pt;
    pt.sigma = sigma;
    const auto [best_id, best] = detail::best_attack(table, opt);
    pt.best_attack = best_id.label();
    pt.tpr_at_1fpr = best;
    pt.di_p_min = detail::sweep_di(table, samples, table.attacks(), opt);

    ExtractOptions eo;
    eo.prefix_length = opt.prefix_length > 0 ? opt.prefix_length : default_prefix_length(mode, noisy->seq_len());
    eo.tau = opt.tau;
    eo.threads = opt.threads;
    std::vector<ExtractionCandidate> cands;
    if constexpr (discrete) {
      cands = select_candidates(*noisy, members, opt.top_n, opt.threads);
    } else {
      cands = select_candidates(*noisy, members, opt.top_n, opt.seed, opt.threads);
    }
    pt.extracted_count = count_memorized(extract(*noisy, candidate_samples(cands, members), eo));
    pt.utility_proxy = mean_heldout_nll(trace, Split::kNonmember);
    points.push_back(std::move(pt));
  }
  return points;
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepPoint>& points) {
  LineWriter out(path);
  out.write_line("sigma,tpr_at_1fpr_mean,tpr_at_1fpr_std,best_attack,di_p_min,extracted_count,utility_proxy_nll");
  for (const auto& p : points) {
    out.write_line(format_real(p.sigma) + "," + format_real(p.tpr_at_1fpr.mean) + "," +
                   format_real(p.tpr_at_1fpr.std) + "," + p.best_attack + "," +
                   (p.di_p_min ? std::to_string(*p.di_p_min) : std::string("not_found")) + "," +
                   std::to_string(p.extracted_count) + "," + format_real(p.utility_proxy));
  }
  out.close();
}

}  // namespace iaraudit
