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

// A seedable toy image-autoregressive model.
//
// Discrete: class-conditional sticky Markov sources generate the corpus, and a
// count-based order-m n-gram with additive smoothing is fitted to the member
// set. Each training sequence also feeds an unconditional table with
// probability p_drop, which plays the role of label dropout for guidance.
//
// Continuous: tokens are per-(class, position) means plus Gaussian noise. The
// model stores fitted means and a linear noise predictor per timestep,
//   eps_hat = a_s * (x_s - sqrt(abar_s) * m) + b_s,
// fitted by least squares on noised training tokens.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "iaraudit/common.hpp"
#include "iaraudit/oracle.hpp"
#include "iaraudit/trace.hpp"

namespace iaraudit {

struct SimConfig {
  Mode mode = Mode::kDiscrete;
  int vocab = 64;
  int seq_len = 32;
  int classes = 8;
  int members_per_class = 256;
  int nonmembers_per_class = 256;
  int canaries = 10;
  int duplication = 100;
  int order = 3;
  double smoothing = 0.1;
  double p_drop = 0.1;
  int token_dim = 2;
  int diffusion_steps = 1000;
  std::uint64_t seed = 7;

  // Source shape (discrete).
  double source_concentration = 0.08; // Dirichlet parameter of transition rows
  double class_mix = 0.2;             // weight of the class-specific rows
  double max_stickiness = 0.65;       // per-sequence repeat probability ~ U(0, max)
  // Source shape (continuous).
  double token_noise = 1.0;  // std of a token around its (class, position) mean
  // Continuous fitting.
  int fit_draws = 16;
  int fit_stride = 50;

  bool operator==(const SimConfig&) const = default;
};

inline void validate_config(const SimConfig& c) {
  require(c.vocab >= 2 && c.vocab <= 0xFFFF, ErrorKind::kUsage, "vocab must lie in [2, 65535]");
  require(c.seq_len >= 2, ErrorKind::kUsage, "seq_len must be >= 2");
  require(c.classes >= 1, ErrorKind::kUsage, "classes must be >= 1");
  require(c.members_per_class >= 1 && c.nonmembers_per_class >= 1, ErrorKind::kUsage,
          "member and nonmember counts must be >= 1");
  require(c.canaries >= 0, ErrorKind::kUsage, "canary count must be >= 0");
  require(c.duplication >= 1, ErrorKind::kUsage, "duplication must be >= 1");
  require(c.order >= 1, ErrorKind::kUsage, "n-gram order must be >= 1");
  require(c.smoothing > 0.0, ErrorKind::kUsage, "smoothing must be > 0");
  require(c.p_drop >= 0.0 && c.p_drop < 1.0, ErrorKind::kUsage, "p_drop must lie in [0,1)");
  require(c.token_dim >= 1, ErrorKind::kUsage, "token_dim must be >= 1");
  require(c.diffusion_steps >= 2, ErrorKind::kUsage, "diffusion steps must be >= 2");
  require(c.source_concentration > 0.0, ErrorKind::kUsage, "source concentration must be > 0");
  require(c.class_mix >= 0.0 && c.class_mix <= 1.0, ErrorKind::kUsage, "class_mix must lie in [0,1]");
  require(c.max_stickiness >= 0.0 && c.max_stickiness < 1.0, ErrorKind::kUsage,
          "max_stickiness must lie in [0,1)");
  require(c.token_noise > 0.0, ErrorKind::kUsage, "token_noise must be > 0");
  require(c.fit_draws >= 1 && c.fit_stride >= 1, ErrorKind::kUsage, "fit draws and stride must be >= 1");
}

inline json config_to_json(const SimConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"vocab", c.vocab},
          {"seq_len", c.seq_len},
          {"classes", c.classes},
          {"members_per_class", c.members_per_class},
          {"nonmembers_per_class", c.nonmembers_per_class},
          {"canaries", c.canaries},
          {"duplication", c.duplication},
          {"order", c.order},
          {"smoothing", c.smoothing},
          {"p_drop", c.p_drop},
          {"token_dim", c.token_dim},
          {"diffusion_steps", c.diffusion_steps},
          {"seed", c.seed},
          {"source_concentration", c.source_concentration},
          {"class_mix", c.class_mix},
          {"max_stickiness", c.max_stickiness},
          {"token_noise", c.token_noise},
          {"fit_draws", c.fit_draws},
          {"fit_stride", c.fit_stride}};
}

inline SimConfig config_from_json(const json& j) {
  SimConfig c;
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.vocab = j.at("vocab").get<int>();
  c.seq_len = j.at("seq_len").get<int>();
  c.classes = j.at("classes").get<int>();
  c.members_per_class = j.at("members_per_class").get<int>();
  c.nonmembers_per_class = j.at("nonmembers_per_class").get<int>();
  c.canaries = j.at("canaries").get<int>();
  c.duplication = j.at("duplication").get<int>();
  c.order = j.at("order").get<int>();
  c.smoothing = j.at("smoothing").get<double>();
  c.p_drop = j.at("p_drop").get<double>();
  c.token_dim = j.at("token_dim").get<int>();
  c.diffusion_steps = j.at("diffusion_steps").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.source_concentration = j.at("source_concentration").get<double>();
  c.class_mix = j.at("class_mix").get<double>();
  c.max_stickiness = j.at("max_stickiness").get<double>();
  c.token_noise = j.at("token_noise").get<double>();
  c.fit_draws = j.at("fit_draws").get<int>();
  c.fit_stride = j.at("fit_stride").get<int>();
  validate_config(c);
  return c;
}

// ---------------------------------------------------------------------------
// Corpus.

struct Corpus {
  SimConfig config;
  std::vector<LabeledSequence> samples;  // members, then canaries, then nonmembers

  std::vector<LabeledSequence> with_split(Split split) const {
    std::vector<LabeledSequence> out;
    for (const auto& s : samples) {
      if (s.split == split) out.push_back(s);
    }
    return out;
  }

  bool operator==(const Corpus&) const = default;
};

inline std::string numbered_id(const char* prefix, std::size_t i, int width) {
  std::string n = std::to_string(i);
  if (static_cast<int>(n.size()) < width) n.insert(0, static_cast<std::size_t>(width) - n.size(), '0');
  return std::string(prefix) + "-" + n;
}

namespace detail {

inline std::vector<double> dirichlet(int k, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> v(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (double& x : v) sum += (x = gamma(rng));
  if (!(sum > 0.0)) {
    std::fill(v.begin(), v.end(), 1.0 / k);
    return v;
  }
  for (double& x : v) x /= sum;
  return v;
}

inline std::vector<double> cumulative(const std::vector<double>& p) {
  std::vector<double> c(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) c[i] = (acc += p[i]);
  return c;
}

inline int draw(const std::vector<double>& cum, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, cum.back())(rng);
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cum.begin(), static_cast<std::ptrdiff_t>(cum.size()) - 1));
}

struct MarkovSource {
  std::vector<std::vector<double>> start;                    // [class] cumulative
  std::vector<std::vector<std::vector<double>>> transition;  // [class][prev] cumulative
};

inline MarkovSource make_source(const SimConfig& c) {
  Rng rng = make_stream(c.seed, hash_string("source"));
  const auto v = static_cast<std::size_t>(c.vocab);
  std::vector<std::vector<double>> global(v);
  for (auto& row : global) row = dirichlet(c.vocab, c.source_concentration, rng);
  const auto pi = dirichlet(c.vocab, c.source_concentration, rng);
  MarkovSource src;
  for (int k = 0; k < c.classes; ++k) {
    std::vector<std::vector<double>> rows(v);
    for (std::size_t a = 0; a < v; ++a) {
      const auto own = dirichlet(c.vocab, c.source_concentration, rng);
      rows[a].resize(v);
      for (std::size_t b = 0; b < v; ++b) rows[a][b] = (1.0 - c.class_mix) * global[a][b] + c.class_mix * own[b];
      rows[a] = cumulative(rows[a]);
    }
    const auto own_start = dirichlet(c.vocab, c.source_concentration, rng);
    std::vector<double> start(v);
    for (std::size_t b = 0; b < v; ++b) start[b] = (1.0 - c.class_mix) * pi[b] + c.class_mix * own_start[b];
    src.start.push_back(cumulative(start));
    src.transition.push_back(std::move(rows));
  }
  return src;
}

inline std::vector<int> sample_markov(const MarkovSource& src, int cls, const SimConfig& c, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double rho = unit(rng) * c.max_stickiness;
  std::vector<int> x(static_cast<std::size_t>(c.seq_len));
  x[0] = draw(src.start[static_cast<std::size_t>(cls)], rng);
  for (std::size_t t = 1; t < x.size(); ++t) {
    const bool stick = unit(rng) < rho;
    const int next = draw(src.transition[static_cast<std::size_t>(cls)][static_cast<std::size_t>(x[t - 1])], rng);
    x[t] = stick ? x[t - 1] : next;
  }
  return x;
}

/// Per-(class, position) means of the continuous source.
inline std::vector<Vectors> continuous_source(const SimConfig& c) {
  Rng rng = make_stream(c.seed, hash_string("source"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vectors> means(static_cast<std::size_t>(c.classes));
  for (auto& cls : means) {
    cls.assign(static_cast<std::size_t>(c.seq_len), std::vector<double>(static_cast<std::size_t>(c.token_dim)));
    for (auto& pos : cls) {
      for (double& x : pos) x = normal(rng);
    }
  }
  return means;
}

}  // namespace detail

/// Members and nonmembers drawn i.i.d. from the same class-conditional
/// sources; canaries are uniform random and join the member set with
/// `duplication` training copies each.
inline Corpus generate_corpus(const SimConfig& c) {
  validate_config(c);
  Corpus corpus;
  corpus.config = c;
  const bool discrete = c.mode == Mode::kDiscrete;
  detail::MarkovSource src;
  std::vector<Vectors> means;
  if (discrete) {
    src = detail::make_source(c);
  } else {
    means = detail::continuous_source(c);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  auto make = [&](Split split, int cls, Rng& rng, std::size_t index) {
    LabeledSequence s;
    s.sample_id = numbered_id(split == Split::kMember ? "member" : "nonmember", index, 5);
    s.class_label = cls;
    s.split = split;
    if (discrete) {
      s.tokens = detail::sample_markov(src, cls, c, rng);
    } else {
      s.vectors = means[static_cast<std::size_t>(cls)];
      for (auto& v : s.vectors) {
        for (double& x : v) x += c.token_noise * normal(rng);
      }
    }
    return s;
  };

  std::size_t index = 0;
  for (int k = 0; k < c.classes; ++k) {
    Rng rng = make_stream(c.seed, hash_string("members"), static_cast<std::uint64_t>(k));
    for (int i = 0; i < c.members_per_class; ++i) corpus.samples.push_back(make(Split::kMember, k, rng, index++));
  }
  Rng crng = make_stream(c.seed, hash_string("canaries"));
  std::uniform_int_distribution<int> token(0, c.vocab - 1);
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  for (int i = 0; i < c.canaries; ++i) {
    LabeledSequence s;
    s.sample_id = numbered_id("canary", static_cast<std::size_t>(i), 4);
    s.class_label = i % c.classes;
    s.split = Split::kMember;
    s.copies = c.duplication;
    if (discrete) {
      s.tokens.resize(static_cast<std::size_t>(c.seq_len));
      for (int& t : s.tokens) t = token(crng);
    } else {
      s.vectors.assign(static_cast<std::size_t>(c.seq_len), std::vector<double>(static_cast<std::size_t>(c.token_dim)));
      for (auto& v : s.vectors) {
        for (double& x : v) x = box(crng);
      }
    }
    corpus.samples.push_back(std::move(s));
  }
  index = 0;
  for (int k = 0; k < c.classes; ++k) {
    Rng rng = make_stream(c.seed, hash_string("nonmembers"), static_cast<std::uint64_t>(k));
    for (int i = 0; i < c.nonmembers_per_class; ++i) {
      corpus.samples.push_back(make(Split::kNonmember, k, rng, index++));
    }
  }
  return corpus;
}

inline bool is_canary(const std::string& id) { return id.rfind("canary-", 0) == 0; }

inline json corpus_to_json(const Corpus& c) {
  json samples = json::array();
  for (const auto& s : c.samples) {
    json j = {{"sample_id", s.sample_id}, {"class_label", s.class_label}, {"split", to_string(s.split)},
              {"copies", s.copies}};
    if (c.config.mode == Mode::kDiscrete) {
      j["tokens"] = s.tokens;
    } else {
      j["tokens"] = s.vectors;
    }
    samples.push_back(std::move(j));
  }
  return {{"format", "iaraudit-corpus/1"}, {"config", config_to_json(c.config)}, {"samples", samples}};
}

inline Corpus corpus_from_json(const json& j) {
  require(j.is_object() && j.value("format", "") == "iaraudit-corpus/1", ErrorKind::kInput,
          "not a corpus file");
  Corpus c;
  c.config = config_from_json(j.at("config"));
  for (const auto& js : j.at("samples")) {
    LabeledSequence s;
    s.sample_id = js.at("sample_id").get<std::string>();
    s.class_label = js.at("class_label").get<int>();
    s.split = parse_split(js.at("split").get<std::string>());
    s.copies = js.at("copies").get<int>();
    if (c.config.mode == Mode::kDiscrete) {
      s.tokens = js.at("tokens").get<std::vector<int>>();
      require(s.tokens.size() == static_cast<std::size_t>(c.config.seq_len), ErrorKind::kInput,
              "corpus sample '" + s.sample_id + "' has the wrong length");
    } else {
      s.vectors = js.at("tokens").get<Vectors>();
    }
    require(s.class_label >= 0 && s.class_label < c.config.classes, ErrorKind::kInput,
            "corpus sample '" + s.sample_id + "' has an out-of-range class");
    c.samples.push_back(std::move(s));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Discrete n-gram model.

struct CountRow {
  std::vector<double> counts;
  double total = 0.0;
};

struct DiscreteToyModel {
  SimConfig config;
  std::map<std::vector<int>, CountRow> cond;    // key: class, context...
  std::map<std::vector<int>, CountRow> uncond;  // key: context...
  std::size_t dropped = 0;                      // training sequences that fed `uncond`

  /// Context used at `position`: the last min(position, order - 1) tokens.
  std::span<const int> context_of(std::span<const int> prefix) const {
    const auto len = std::min<std::size_t>(prefix.size(), static_cast<std::size_t>(config.order - 1));
    return prefix.last(len);
  }

  /// Smoothed next-token log-probabilities (count + l) / (total + l V).
  std::vector<double> log_probs(std::span<const int> prefix, int class_label) const {
    const auto ctx = context_of(prefix);
    std::vector<int> key;
    key.reserve(ctx.size() + 1);
    if (class_label != kNullClass) key.push_back(class_label);
    key.insert(key.end(), ctx.begin(), ctx.end());
    const auto& table = class_label == kNullClass ? uncond : cond;
    const auto it = table.find(key);
    const double lam = config.smoothing;
    const auto v = static_cast<std::size_t>(config.vocab);
    std::vector<double> out(v);
    if (it == table.end()) {
      std::fill(out.begin(), out.end(), -std::log(static_cast<double>(v)));
      return out;
    }
    const double denom = std::log(it->second.total + lam * static_cast<double>(v));
    for (std::size_t i = 0; i < v; ++i) out[i] = std::log(it->second.counts[i] + lam) - denom;
    return out;
  }
};

/// Training sequences in corpus order, one entry per copy.
inline std::vector<const LabeledSequence*> training_copies(const Corpus& corpus) {
  std::vector<const LabeledSequence*> out;
  for (const auto& s : corpus.samples) {
    if (s.split != Split::kMember) continue;
    for (int k = 0; k < s.copies; ++k) out.push_back(&s);
  }
  return out;
}

/// Label dropout decisions, one per training copy.
inline std::vector<char> dropout_mask(const SimConfig& c, std::size_t n) {
  Rng rng = make_stream(c.seed, hash_string("dropout"));
  std::bernoulli_distribution drop(c.p_drop);
  std::vector<char> out(n);
  for (auto& d : out) d = c.p_drop > 0.0 && drop(rng) ? 1 : 0;
  return out;
}

/// Fits the n-gram tables; `smoothing` overrides the corpus config when given.
inline DiscreteToyModel fit_discrete(const Corpus& corpus, std::optional<double> smoothing = std::nullopt) {
  require(corpus.config.mode == Mode::kDiscrete, ErrorKind::kInput, "fit_discrete needs a discrete corpus");
  DiscreteToyModel m;
  m.config = corpus.config;
  if (smoothing) m.config.smoothing = *smoothing;
  validate_config(m.config);
  const auto train = training_copies(corpus);
  require(!train.empty(), ErrorKind::kInput, "no member sequences to fit");
  const auto drop = dropout_mask(m.config, train.size());
  const auto v = static_cast<std::size_t>(m.config.vocab);
  auto bump = [&](std::map<std::vector<int>, CountRow>& table, std::vector<int> key, int token) {
    auto& row = table[std::move(key)];
    if (row.counts.empty()) row.counts.assign(v, 0.0);
    row.counts[static_cast<std::size_t>(token)] += 1.0;
    row.total += 1.0;
  };
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& s = *train[i];
    const std::span<const int> tok(s.tokens);
    for (std::size_t p = 0; p < tok.size(); ++p) {
      const auto ctx = m.context_of(tok.first(p));
      std::vector<int> key{s.class_label};
      key.insert(key.end(), ctx.begin(), ctx.end());
      bump(m.cond, key, tok[p]);
      if (drop[i]) bump(m.uncond, std::vector<int>(ctx.begin(), ctx.end()), tok[p]);
    }
    m.dropped += drop[i] ? 1 : 0;
  }
  return m;
}

class DiscreteToyOracle : public DiscreteOracle {
 public:
  explicit DiscreteToyOracle(const DiscreteToyModel& model) : model_(model) {}
  int vocab() const override { return model_.config.vocab; }
  int seq_len() const override { return model_.config.seq_len; }
  bool has_unconditional() const override { return model_.dropped > 0; }
  std::vector<double> next_logits(std::span<const int> context, int class_label) const override {
    if (class_label == kNullClass) {
      require(has_unconditional(), ErrorKind::kInput,
              "model has no unconditional branch (no label-dropped training sequences)");
    }
    return model_.log_probs(context, class_label);
  }

 private:
  const DiscreteToyModel& model_;
};

namespace detail {

inline json table_to_json(const std::map<std::vector<int>, CountRow>& table) {
  json rows = json::array();
  for (const auto& [key, row] : table) {
    json counts = json::array();
    for (std::size_t i = 0; i < row.counts.size(); ++i) {
      if (row.counts[i] != 0.0) counts.push_back({static_cast<int>(i), row.counts[i]});
    }
    rows.push_back({{"key", key}, {"counts", counts}});
  }
  return rows;
}

inline std::map<std::vector<int>, CountRow> table_from_json(const json& rows, int vocab) {
  std::map<std::vector<int>, CountRow> table;
  for (const auto& r : rows) {
    CountRow row;
    row.counts.assign(static_cast<std::size_t>(vocab), 0.0);
    for (const auto& c : r.at("counts")) {
      const int tok = c.at(0).get<int>();
      require(tok >= 0 && tok < vocab, ErrorKind::kInput, "model count for token outside vocab");
      row.counts[static_cast<std::size_t>(tok)] = c.at(1).get<double>();
      row.total += row.counts[static_cast<std::size_t>(tok)];
    }
    table[r.at("key").get<std::vector<int>>()] = std::move(row);
  }
  return table;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Continuous model.

/// abar_s = prod_{i<=s} (1 - beta_i), beta linear from 1e-4 to 0.02.
inline std::vector<double> ddpm_alpha_bar(int steps) {
  require(steps >= 2, ErrorKind::kUsage, "diffusion steps must be >= 2");
  std::vector<double> ab(static_cast<std::size_t>(steps));
  double acc = 1.0;
  for (int s = 0; s < steps; ++s) {
    const double beta = 1e-4 + (0.02 - 1e-4) * static_cast<double>(s) / static_cast<double>(steps - 1);
    acc *= 1.0 - beta;
    ab[static_cast<std::size_t>(s)] = acc;
  }
  return ab;
}

struct ContinuousToyModel {
  SimConfig config;
  std::vector<Vectors> mu;       // [class][position] -> token_dim
  std::optional<Vectors> mu_null;  // [position], from label-dropped sequences
  std::vector<double> alpha_bar;
  std::vector<int> grid;  // fitted timesteps, increasing
  std::vector<double> a;
  std::vector<std::vector<double>> b;

  /// Predictor coefficients at `s`, linear between fitted timesteps.
  std::pair<double, std::vector<double>> coefficients(int s) const {
    const auto it = std::lower_bound(grid.begin(), grid.end(), s);
    if (it == grid.begin()) return {a.front(), b.front()};
    if (it == grid.end()) return {a.back(), b.back()};
    const auto hi = static_cast<std::size_t>(it - grid.begin());
    if (*it == s) return {a[hi], b[hi]};
    const auto lo = hi - 1;
    const double w = static_cast<double>(s - grid[lo]) / static_cast<double>(grid[hi] - grid[lo]);
    std::vector<double> bb(b[lo].size());
    for (std::size_t j = 0; j < bb.size(); ++j) bb[j] = (1.0 - w) * b[lo][j] + w * b[hi][j];
    return {(1.0 - w) * a[lo] + w * a[hi], bb};
  }
};

inline ContinuousToyModel fit_continuous(const Corpus& corpus) {
  require(corpus.config.mode == Mode::kContinuous, ErrorKind::kInput,
          "fit_continuous needs a continuous corpus");
  ContinuousToyModel m;
  m.config = corpus.config;
  const SimConfig& c = m.config;
  const auto n = static_cast<std::size_t>(c.seq_len);
  const auto d = static_cast<std::size_t>(c.token_dim);
  const auto train = training_copies(corpus);
  const auto drop = dropout_mask(c, train.size());

  m.mu.assign(static_cast<std::size_t>(c.classes), Vectors(n, std::vector<double>(d, 0.0)));
  std::vector<double> count(static_cast<std::size_t>(c.classes), 0.0);
  Vectors null_sum(n, std::vector<double>(d, 0.0));
  double null_count = 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& s = *train[i];
    require(s.vectors.size() == n, ErrorKind::kInput, "sample '" + s.sample_id + "' has the wrong length");
    auto& mu = m.mu[static_cast<std::size_t>(s.class_label)];
    for (std::size_t p = 0; p < n; ++p) {
      require(s.vectors[p].size() == d, ErrorKind::kInput, "sample '" + s.sample_id + "' has the wrong dimension");
      for (std::size_t j = 0; j < d; ++j) {
        mu[p][j] += s.vectors[p][j];
        if (drop[i]) null_sum[p][j] += s.vectors[p][j];
      }
    }
    count[static_cast<std::size_t>(s.class_label)] += 1.0;
    null_count += drop[i] ? 1.0 : 0.0;
  }
  for (std::size_t k = 0; k < m.mu.size(); ++k) {
    require(count[k] >= 2.0, ErrorKind::kInput,
            "class " + std::to_string(k) + " has fewer than 2 training tokens per position");
    for (auto& v : m.mu[k]) {
      for (double& x : v) x /= count[k];
    }
  }
  if (null_count > 0.0) {
    for (auto& v : null_sum) {
      for (double& x : v) x /= null_count;
    }
    m.mu_null = std::move(null_sum);
  }

  m.alpha_bar = ddpm_alpha_bar(c.diffusion_steps);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int s = 0; s < c.diffusion_steps; s += c.fit_stride) {
    const double ab = m.alpha_bar[static_cast<std::size_t>(s)];
    const double sa = std::sqrt(ab);
    const double sn = std::sqrt(1.0 - ab);
    Rng rng = make_stream(c.seed, hash_string("fit_continuous"), static_cast<std::uint64_t>(s));
    double suu = 0.0, sue = 0.0, cnt = 0.0;
    std::vector<double> su(d, 0.0), se(d, 0.0);
    for (const auto* sp : train) {
      const auto& mu = m.mu[static_cast<std::size_t>(sp->class_label)];
      for (std::size_t p = 0; p < n; ++p) {
        for (int r = 0; r < c.fit_draws; ++r) {
          for (std::size_t j = 0; j < d; ++j) {
            const double e = normal(rng);
            const double u = sa * sp->vectors[p][j] + sn * e - sa * mu[p][j];
            su[j] += u;
            se[j] += e;
            suu += u * u;
            sue += u * e;
          }
          cnt += 1.0;
        }
      }
    }
    double cu = 0.0, cue = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      cu += su[j] * su[j] / cnt;
      cue += su[j] * se[j] / cnt;
    }
    const double var = suu - cu;
    require(var > 0.0, ErrorKind::kNumerical, "denoiser fit: degenerate inputs");
    const double coef = (sue - cue) / var;
    std::vector<double> bias(d);
    for (std::size_t j = 0; j < d; ++j) bias[j] = (se[j] - coef * su[j]) / cnt;
    require(std::isfinite(coef), ErrorKind::kNumerical, "denoiser fit: non-finite coefficient");
    m.grid.push_back(s);
    m.a.push_back(coef);
    m.b.push_back(std::move(bias));
  }
  return m;
}

/// Conditioning mean: the class (or null) mean blended with the mean of the
/// visible tokens, weighted by the visible fraction.
class ContinuousToyOracle : public ContinuousOracle {
 public:
  explicit ContinuousToyOracle(const ContinuousToyModel& model, bool blend_visible = true)
      : model_(model), blend_(blend_visible) {}

  int token_dim() const override { return model_.config.token_dim; }
  int seq_len() const override { return model_.config.seq_len; }
  bool has_unconditional() const override { return model_.mu_null.has_value(); }
  int diffusion_steps() const override { return model_.config.diffusion_steps; }
  double alpha_bar(int s) const override {
    require(s >= 0 && s < diffusion_steps(), ErrorKind::kUsage, "timestep out of range");
    return model_.alpha_bar[static_cast<std::size_t>(s)];
  }

  Vectors conditioning(const Vectors& tokens, const std::vector<char>& mask, int class_label) const override {
    const Vectors* base = nullptr;
    if (class_label == kNullClass) {
      require(has_unconditional(), ErrorKind::kInput,
              "model has no unconditional branch (no label-dropped training sequences)");
      base = &*model_.mu_null;
    } else {
      require(class_label >= 0 && class_label < model_.config.classes, ErrorKind::kInput,
              "class label outside the model's classes");
      base = &model_.mu[static_cast<std::size_t>(class_label)];
    }
    Vectors out = *base;
    if (!blend_) return out;
    const auto d = static_cast<std::size_t>(token_dim());
    std::vector<double> visible(d, 0.0);
    double nv = 0.0;
    for (std::size_t p = 0; p < tokens.size(); ++p) {
      if (mask[p]) continue;
      for (std::size_t j = 0; j < d; ++j) visible[j] += tokens[p][j];
      nv += 1.0;
    }
    if (nv == 0.0) return out;
    const double w = nv / static_cast<double>(tokens.size());
    for (auto& v : out) {
      for (std::size_t j = 0; j < d; ++j) v[j] = (1.0 - w) * v[j] + w * visible[j] / nv;
    }
    return out;
  }

  std::vector<double> predict_noise(std::span<const double> noised, std::span<const double> cond, int timestep,
                                    std::uint64_t) const override {
    const double sa = std::sqrt(alpha_bar(timestep));
    const auto [coef, bias] = model_.coefficients(timestep);
    std::vector<double> eps(noised.size());
    for (std::size_t j = 0; j < eps.size(); ++j) eps[j] = coef * (noised[j] - sa * cond[j]) + bias[j];
    return eps;
  }

  Vectors predict_masked(const Vectors& tokens, const std::vector<char>& mask, int class_label) const override {
    const Vectors cond = conditioning(tokens, mask, class_label);
    Vectors out = tokens;
    for (std::size_t p = 0; p < out.size(); ++p) {
      if (mask[p]) out[p] = cond[p];
    }
    return out;
  }

 private:
  const ContinuousToyModel& model_;
  bool blend_;
};

// ---------------------------------------------------------------------------
// Model files.

inline json model_to_json(const DiscreteToyModel& m) {
  return {{"format", "iaraudit-model/1"},
          {"mode", "discrete"},
          {"config", config_to_json(m.config)},
          {"dropped", m.dropped},
          {"cond", detail::table_to_json(m.cond)},
          {"uncond", detail::table_to_json(m.uncond)}};
}

inline json model_to_json(const ContinuousToyModel& m) {
  json j = {{"format", "iaraudit-model/1"}, {"mode", "continuous"}, {"config", config_to_json(m.config)},
            {"mu", m.mu},         {"grid", m.grid},       {"a", m.a},
            {"b", m.b}};
  j["mu_null"] = m.mu_null ? json(*m.mu_null) : json(nullptr);
  return j;
}

/// Either model, as read from a model file.
struct ToyModel {
  Mode mode = Mode::kDiscrete;
  DiscreteToyModel discrete;
  ContinuousToyModel continuous;

  const SimConfig& config() const { return mode == Mode::kDiscrete ? discrete.config : continuous.config; }
};

inline ToyModel model_from_json(const json& j) {
  require(j.is_object() && j.value("format", "") == "iaraudit-model/1", ErrorKind::kInput, "not a model file");
  ToyModel out;
  out.mode = parse_mode(j.at("mode").get<std::string>());
  const SimConfig c = config_from_json(j.at("config"));
  if (out.mode == Mode::kDiscrete) {
    out.discrete.config = c;
    out.discrete.dropped = j.at("dropped").get<std::size_t>();
    out.discrete.cond = detail::table_from_json(j.at("cond"), c.vocab);
    out.discrete.uncond = detail::table_from_json(j.at("uncond"), c.vocab);
  } else {
    auto& m = out.continuous;
    m.config = c;
    m.mu = j.at("mu").get<std::vector<Vectors>>();
    if (!j.at("mu_null").is_null()) m.mu_null = j.at("mu_null").get<Vectors>();
    m.alpha_bar = ddpm_alpha_bar(c.diffusion_steps);
    m.grid = j.at("grid").get<std::vector<int>>();
    m.a = j.at("a").get<std::vector<double>>();
    m.b = j.at("b").get<std::vector<std::vector<double>>>();
    require(!m.grid.empty() && m.a.size() == m.grid.size() && m.b.size() == m.grid.size(), ErrorKind::kInput,
            "model denoiser tables are inconsistent");
    require(m.mu.size() == static_cast<std::size_t>(c.classes), ErrorKind::kInput, "model means are inconsistent");
  }
  return out;
}

inline json simulator_generator(const SimConfig& c) {
  return {{"name", "toy_iar_sim"}, {"config", config_to_json(c)}};
}

}  // namespace iaraudit
