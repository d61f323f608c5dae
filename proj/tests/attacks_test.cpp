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

#include <gtest/gtest.h>

#include <cstdio>
#include <random>

#include "test_util.hpp"

namespace iaraudit {
namespace {

TokenBlock block_of(std::vector<double> loglik) {
  TokenBlock b;
  b.loglik = std::move(loglik);
  return b;
}

// Phrase count straight from the exhaustive-history definition: each phrase
// is the shortest extension not seen starting earlier in the sequence.
int naive_lz76(const std::vector<int>& s) {
  const std::size_t n = s.size();
  std::size_t i = 0;
  int phrases = 0;
  while (i < n) {
    std::size_t len = 1;
    for (;; ++len) {
      if (i + len > n) break;
      bool seen = false;
      for (std::size_t j = 0; j < i && !seen; ++j) {
        seen = std::equal(s.begin() + static_cast<std::ptrdiff_t>(i),
                          s.begin() + static_cast<std::ptrdiff_t>(i + len), s.begin() + static_cast<std::ptrdiff_t>(j));
      }
      if (!seen) break;
    }
    ++phrases;
    i += len;
  }
  return phrases;
}

double naive_apen(const std::vector<double>& x, int m, double r) {
  auto phi = [&](int len) {
    const int n = static_cast<int>(x.size()) - len + 1;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      int c = 0;
      for (int j = 0; j < n; ++j) {
        double d = 0;
        for (int k = 0; k < len; ++k) d = std::max(d, std::abs(x[i + k] - x[j + k]));
        if (d <= r) ++c;
      }
      acc += std::log(static_cast<double>(c) / n);
    }
    return acc / n;
  };
  return phi(m) - phi(m + 1);
}

TEST(LossScore, Examples) {
  EXPECT_EQ(loss_score(std::vector<double>{0, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(loss_score(std::vector<double>{-1, -2, -3}), -2.0);
  EXPECT_THROW(loss_score(std::vector<double>{}), Error);
}

TEST(ZlibScore, RatioExample) { EXPECT_DOUBLE_EQ(zlib_ratio_score(2.0, 20), -0.1); }

TEST(ZlibScore, CompressedSizesMatchReferenceDeflate) {
  std::vector<int> same(32, 9), distinct(32);
  std::iota(distinct.begin(), distinct.end(), 0);
  const auto a = deflate_size(token_payload(same));
  const auto b = deflate_size(token_payload(distinct));
  EXPECT_LT(a, b);
  // Independent binding of the same format, at its default level.
  FILE* p = popen(
      "python3 -c \"import zlib,struct;"
      "print(len(zlib.compress(struct.pack('<32H',*([9]*32)))),"
      "len(zlib.compress(struct.pack('<32H',*range(32)))))\"",
      "r");
  if (p == nullptr) GTEST_SKIP() << "python3 unavailable";
  std::size_t ra = 0, rb = 0;
  const int got = std::fscanf(p, "%zu %zu", &ra, &rb);
  pclose(p);
  if (got != 2) GTEST_SKIP() << "python3 zlib unavailable";
  EXPECT_EQ(a, ra);
  EXPECT_EQ(b, rb);
  // Equal NLL: the better-compressing payload gets the larger-magnitude score.
  const std::vector<double> ll(32, -2.0);
  EXPECT_LT(zlib_score(ll, same), zlib_score(ll, distinct));
}

TEST(HingeScore, Examples) {
  TokenBlock b = block_of({-0.5});
  b.max_other = {-1.2};
  EXPECT_NEAR(hinge_score(b), 0.7, 1e-15);
  const TokenStats u = testing::uniform_stats(16, 3);
  EXPECT_EQ(hinge_score(TokenBlock::from_stats(std::vector<TokenStats>(4, u))), 0.0);
  std::vector<TokenStats> peaked;
  for (int t = 0; t < 5; ++t) {
    std::vector<double> logits(8, 0.0);
    logits[static_cast<std::size_t>(t)] = 3.0;
    peaked.push_back(compute_token_stats(log_softmax(logits), t));
  }
  EXPECT_GT(hinge_score(TokenBlock::from_stats(peaked)), 0.0);
}

TEST(MinK, Examples) {
  EXPECT_EQ(min_k_score(std::vector<double>{-3, -1, -2}, 34), -3.0);
  EXPECT_EQ(min_k_count(20, 32), 6u);
  EXPECT_EQ(min_k_count(1, 10), 1u);
  EXPECT_THROW(min_k_count(0, 10), Error);
}

TEST(MinK, FullKIsLossBitwise) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-9, 0);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> ll(1 + rep % 50);
    for (auto& v : ll) v = u(rng);
    EXPECT_EQ(min_k_score(ll, 100), loss_score(ll));
  }
}

TEST(MinK, MonotoneInK) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-9, 0);
  std::vector<double> ll(40);
  for (auto& v : ll) v = u(rng);
  double prev = -1e300;
  for (double k : {10.0, 20.0, 30.0, 40.0, 50.0, 100.0}) {
    const double s = min_k_score(ll, k);
    EXPECT_GE(s, prev);
    prev = s;
  }
}

TEST(MinKpp, Examples) {
  TokenBlock b = block_of({-1});
  b.mean = {-2};
  b.stddev = {0.5};
  EXPECT_DOUBLE_EQ(min_k_pp_score(b, 100), 2.0);

  // z-sequence [-1.5, 0.2, 3.0], k=67 selects two tokens.
  TokenBlock z = block_of({-1.5, 0.2, 3.0});
  z.mean = {0, 0, 0};
  z.stddev = {1, 1, 1};
  EXPECT_DOUBLE_EQ(min_k_pp_score(z, 67), -0.65);

  TokenBlock flat = block_of({-1, -1});
  flat.mean = {-1, -1};
  flat.stddev = {0, 0};
  EXPECT_THROW(min_k_pp_score(flat, 20), Error);

  TokenBlock mixed = block_of({-1, -3});
  mixed.mean = {-1, -2};
  mixed.stddev = {0, 1};
  std::size_t skipped = 0;
  EXPECT_DOUBLE_EQ(min_k_pp_score(mixed, 100, &skipped), -1.0);
  EXPECT_EQ(skipped, 1u);
}

TEST(Surp, Examples) {
  const std::vector<double> logp = {std::log(0.1), std::log(0.2), std::log(0.7)};
  const TokenBlock b = TokenBlock::from_stats(std::vector<TokenStats>{compute_token_stats(logp, 0)});
  EXPECT_NEAR(surp_score(b, 50, 2.0), 0.1, 1e-15);
  EXPECT_EQ(surp_score(b, 50, 0.0), 0.0);
  EXPECT_THROW(surp_score(b, 25, 2.0), Error);
}

TEST(Surp, BestGridPointByExhaustiveSearch) {
  // Members put a little more mass on surprising true tokens; the grid search
  // must return the (k, eps) pair with the largest AUC.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 2);
  std::vector<std::vector<TokenStats>> members, nonmembers;
  for (int s = 0; s < 60; ++s) {
    for (auto* set : {&members, &nonmembers}) {
      std::vector<TokenStats> seq;
      for (int t = 0; t < 16; ++t) {
        std::vector<double> logits(12);
        for (auto& v : logits) v = n(rng);
        if (set == &members) logits[0] += 0.6;
        seq.push_back(compute_token_stats(log_softmax(logits), 0));
      }
      set->push_back(seq);
    }
  }
  double best = -1;
  std::pair<int, double> arg;
  for (int k : kQuantileLevels) {
    for (double e : kEntropyGrid) {
      std::vector<double> m, u;
      for (const auto& s : members) m.push_back(surp_score(TokenBlock::from_stats(s), k, e));
      for (const auto& s : nonmembers) u.push_back(surp_score(TokenBlock::from_stats(s), k, e));
      const double a = auc(m, u);
      if (a > best) {
        best = a;
        arg = {k, e};
      }
    }
  }
  EXPECT_GE(best, 0.5);
  EXPECT_TRUE(std::find(kQuantileLevels.begin(), kQuantileLevels.end(), arg.first) != kQuantileLevels.end());
}

TEST(Camia, Examples) {
  const auto f = camia_features(std::vector<double>{3, 2, 1});
  EXPECT_DOUBLE_EQ(f.slope, 1.0);
  EXPECT_DOUBLE_EQ(least_squares_slope(std::vector<double>{3, 2, 1}), -1.0);
  const auto g = camia_features(std::vector<double>{0.5, 1.5, 2.5}, std::nullopt, 1.0);
  EXPECT_DOUBLE_EQ(g.count_below, 1.0 / 3);
  EXPECT_THROW(camia_features(std::vector<double>{1, 2}), Error);
}

TEST(Camia, ConstantSequence) {
  const std::vector<double> c = {1, 1, 1, 1};
  EXPECT_EQ(approximate_entropy(c, 2, 0.0), 0.0);
  EXPECT_EQ(lz76_complexity(quantize_uniform(c, 8)), 2);
  EXPECT_EQ(naive_lz76(quantize_uniform(c, 8)), 2);
  const auto f = camia_features(c);
  EXPECT_EQ(f.apen, 0.0);
  EXPECT_EQ(f.lz, -2.0);
}

TEST(Camia, Lz76MatchesDefinition) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<int> s(1 + rng() % 40);
    const int alphabet = 1 + static_cast<int>(rng() % 4);
    for (auto& v : s) v = static_cast<int>(rng() % static_cast<unsigned>(alphabet));
    EXPECT_EQ(lz76_complexity(s), naive_lz76(s));
  }
  // Textbook example: 0001101001000101 parses into 6 phrases.
  const std::vector<int> ks = {0, 0, 0, 1, 1, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 1};
  EXPECT_EQ(lz76_complexity(ks), 6);
}

TEST(Camia, ApEnMatchesDefinition) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0, 1);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(8 + rep % 30);
    for (auto& v : x) v = n(rng);
    EXPECT_NEAR(approximate_entropy(x, 2, 0.3), naive_apen(x, 2, 0.3), 1e-12);
  }
  std::vector<double> periodic;
  for (int i = 0; i < 40; ++i) periodic.push_back(i % 2);
  EXPECT_NEAR(approximate_entropy(periodic, 2, 0.1), 0.0, 0.05);
}

TEST(Camia, RepeatAmplificationOrientation) {
  const std::vector<double> first = {2, 2, 2};
  const std::vector<double> drop = {0.5, 0.5, 0.5};
  const std::vector<double> flat = {1.9, 1.9, 1.9};
  const auto strong = camia_features(first, std::span<const double>(drop));
  const auto weak = camia_features(first, std::span<const double>(flat));
  EXPECT_LT(*strong.rep_amp, *weak.rep_amp);
}

TEST(AverageRepeats, Examples) {
  const std::vector<LossRepeats> b = {{{1, 3}, 500, true}, {{2, 2}, 500, true}, {{}, 500, false}};
  EXPECT_EQ(average_repeats(b), (std::vector<double>{2, 2}));
  const std::vector<LossRepeats> one = {{{0.25}, 0, true}, {{1.5}, 0, true}};
  EXPECT_EQ(average_repeats(one), (std::vector<double>{0.25, 1.5}));
  const std::vector<LossRepeats> ragged = {{{1, 3}, 500, true}, {{2}, 500, true}};
  EXPECT_THROW(average_repeats(ragged), Error);
}

TEST(CfgDiff, DiscreteAndContinuous) {
  auto s = testing::discrete_sample("d", 4, 8);
  s.diff.reset();
  s.cond[0].loglik_true = -1.0;
  (*s.uncond)[0].loglik_true = -2.5;
  EXPECT_DOUBLE_EQ(cfg_diff_transform(s, Mode::kDiscrete).loglik[0], 1.5);
  s.uncond.reset();
  EXPECT_THROW(cfg_diff_transform(s, Mode::kDiscrete), Error);

  auto c = testing::continuous_sample("c", 8, 2, 3);
  for (double v : cfg_diff_transform(c, Mode::kContinuous).loglik) EXPECT_NEAR(v, 0.5, 1e-12);
  c.uncond_loss = c.cond_loss;
  for (double v : cfg_diff_transform(c, Mode::kContinuous).loglik) EXPECT_EQ(v, 0.0);
}

TEST(AttackIds, LabelsRoundTrip) {
  for (Mode m : {Mode::kDiscrete, Mode::kContinuous}) {
    for (const auto& id : attack_grid(m, true, true)) EXPECT_EQ(parse_attack_id(id.label()), id) << id.label();
  }
  EXPECT_THROW(parse_attack_id("nope:cond"), Error);
  EXPECT_THROW(parse_attack_id("loss:sideways"), Error);
}

TEST(AttackIds, GridSizes) {
  // Discrete cond: loss, zlib, hinge, 5 min_k, 5 min_k_pp, 20 surp, 5 camia.
  EXPECT_EQ(attack_grid(Mode::kDiscrete, false, true).size(), 38u);
  // Diff drops surp and rep_amp.
  EXPECT_EQ(attack_grid(Mode::kDiscrete, true, true).size(), 38u + 17u);
  // Continuous: loss, 5 min_k, camia (4 + rep_amp) for cond; diff drops rep_amp.
  EXPECT_EQ(attack_grid(Mode::kContinuous, true, true).size(), 11u + 10u);
  EXPECT_EQ(default_feature_set(Mode::kDiscrete, true, true).size(), 20u);
}

TEST(ScoreAll, EmptyAttackSetAndIncompatibleVariant) {
  TraceFile t{testing::discrete_header(4, 8), {testing::discrete_sample("a", 4, 8)}};
  EXPECT_TRUE(score_all(t, {}).rows.empty());
  const ScoreTable table = score_all(t, {{AttackName::kLoss, Variant::kLossCond, {}}});
  EXPECT_TRUE(table.rows.empty());
  ASSERT_EQ(table.warnings.size(), 1u);
  EXPECT_NE(table.warnings[0].find("loss_cond"), std::string::npos);
}

TEST(ScoreAll, SampleFailuresBecomeNaNWithWarning) {
  auto bad = testing::discrete_sample("b", 4, 8);
  bad.repeated_pass.reset();
  TraceFile t{testing::discrete_header(4, 8), {testing::discrete_sample("a", 4, 8), bad}};
  const AttackId rep{AttackName::kCamiaRepAmp, Variant::kCond, {}};
  const ScoreTable table = score_all(t, {rep});
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_TRUE(std::isfinite(table.rows[0].value));
  EXPECT_TRUE(std::isnan(table.rows[1].value));
  ASSERT_EQ(table.warnings.size(), 1u);
}

TEST(ScoreAll, ThreadCountDoesNotChangeResults) {
  TraceFile t{testing::discrete_header(16, 8), {}};
  for (int i = 0; i < 40; ++i) t.samples.push_back(testing::discrete_sample("s" + std::to_string(100 - i), 16, 8));
  const auto grid = attack_grid(Mode::kDiscrete, true, true);
  const ScoreTable a = score_all(t, grid, 1);
  const ScoreTable b = score_all(t, grid, 6);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].sample_id, b.rows[i].sample_id);
    EXPECT_EQ(std::memcmp(&a.rows[i].value, &b.rows[i].value, sizeof(double)), 0);
  }
}

TEST(ScoreAll, CsvRoundTrip) {
  testing::TempDir dir;
  TraceFile t{testing::continuous_header(8, 2), {testing::continuous_sample("a", 8, 2, 3),
                                                 testing::continuous_sample("b", 8, 2, 3, Split::kNonmember)}};
  const ScoreTable table = score_all(t, attack_grid(Mode::kContinuous, true, false));
  write_scores_csv(dir.file("s.csv"), table);
  const ScoreTable back = read_scores_csv(dir.file("s.csv"));
  ASSERT_EQ(back.rows.size(), table.rows.size());
  for (std::size_t i = 0; i < back.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].attack, table.rows[i].attack);
    EXPECT_EQ(back.rows[i].split, table.rows[i].split);
    EXPECT_EQ(back.rows[i].value, table.rows[i].value);
  }
}

}  // namespace
}  // namespace iaraudit
