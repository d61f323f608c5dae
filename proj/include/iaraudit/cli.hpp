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

// Command-line front end. Every command writes its outputs and a
// manifest.json into --out. Exit codes: 0 success, 1 usage error,
// 2 malformed input, 3 numerical failure.

#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iaraudit/attacks.hpp"
#include "iaraudit/dataset_inference.hpp"
#include "iaraudit/defense.hpp"
#include "iaraudit/extraction.hpp"
#include "iaraudit/metrics.hpp"
#include "iaraudit/oracle.hpp"
#include "iaraudit/sim.hpp"
#include "iaraudit/trace.hpp"

namespace iaraudit::cli {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;

struct Common {
  std::string out;
  std::uint64_t seed = 7;
  int threads = 1;
};

inline void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_option("--seed", c.seed, "Master seed (IARAUDIT_SEED overrides the default)");
  cmd->add_option("--threads", c.threads, "Worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber);
}

/// Resolves the seed: explicit flag, then IARAUDIT_SEED, then the default.
inline std::string resolve_seed(CLI::App* cmd, Common& c) {
  if (cmd->count("--seed") > 0) return "flag";
  if (const char* env = std::getenv("IARAUDIT_SEED")) {
    try {
      c.seed = std::stoull(env);
    } catch (const std::exception&) {
      fail(ErrorKind::kUsage, "IARAUDIT_SEED is not an unsigned integer");
    }
    return "IARAUDIT_SEED";
  }
  return "default";
}

class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& p) { inputs_.push_back(p); }
  void output(const std::string& p) { outputs_.push_back(p); }
  void option(const std::string& k, json v) { options_[k] = std::move(v); }
  void warning(const std::string& w) { warnings_.push_back(w); }
  const std::vector<std::string>& warnings() const { return warnings_; }

  void write(const Common& c, const std::string& seed_source) const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json j = {{"command", command_},   {"argv", argv_},       {"options", options_},
              {"seed", c.seed},        {"seed_source", seed_source},
              {"threads", c.threads},  {"inputs", inputs_},   {"outputs", outputs_},
              {"warnings", warnings_}, {"version", kVersion}, {"wall_clock_seconds", secs}};
    write_json_file((fs::path(c.out) / "manifest.json").string(), j, 2);
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> inputs_, outputs_, warnings_;
  json options_ = json::object();
};

inline std::string out_path(const Common& c, const std::string& name) {
  return (fs::path(c.out) / name).string();
}

inline void make_out_dir(const Common& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  require(!ec, ErrorKind::kInput, "cannot create output directory " + c.out + ": " + ec.message());
}

inline std::vector<AttackId> select_attacks(const std::string& selection, Mode mode, bool diff, bool repeated,
                                            const std::vector<double>& k_grid) {
  std::vector<AttackId> ids;
  if (selection == "grid" || selection == "all") {
    ids = attack_grid(mode, diff, repeated);
  } else if (selection == "default") {
    ids = default_feature_set(mode, diff, repeated);
  } else {
    std::stringstream ss(selection);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) ids.push_back(parse_attack_id(item));
    }
  }
  if (!k_grid.empty() && (selection == "grid" || selection == "all")) {
    std::vector<AttackId> regridded;
    for (const auto& id : ids) {
      if (!id.uses_k()) {
        regridded.push_back(id);
        continue;
      }
      if (id.hp.k_percent != kKGrid.front()) continue;
      for (double k : k_grid) {
        AttackId copy = id;
        copy.hp.k_percent = k;
        regridded.push_back(copy);
      }
    }
    ids = regridded;
  }
  require(!ids.empty(), ErrorKind::kUsage, "no attacks selected");
  return ids;
}

struct Loaded {
  Corpus corpus;
  ToyModel model;
};

inline Loaded load_model_and_corpus(const std::string& model_path, const std::string& corpus_path) {
  Loaded l;
  l.model = model_from_json(read_json_file(model_path));
  l.corpus = corpus_from_json(read_json_file(corpus_path));
  require(l.model.mode == l.corpus.config.mode, ErrorKind::kInput, "model and corpus modes differ");
  require(l.model.config().seq_len == l.corpus.config.seq_len, ErrorKind::kInput,
          "model and corpus sequence lengths differ");
  return l;
}

inline std::string opt_int(const std::optional<int>& v) { return v ? std::to_string(*v) : "not_found"; }

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"iaraudit: privacy audits for image autoregressive models", "iaraudit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  SimConfig cfg;
  std::string mode_name = "discrete";

  auto* sim = app.add_subcommand("sim", "Toy model: corpus generation, fitting, trace export");
  sim->require_subcommand(1);
  auto* gen = sim->add_subcommand("gen", "Generate a seeded corpus with planted canaries");
  add_common(gen, common);
  gen->add_option("--mode", mode_name, "discrete or continuous")->check(CLI::IsMember({"discrete", "continuous"}));
  gen->add_option("--vocab", cfg.vocab);
  gen->add_option("--seq-len", cfg.seq_len);
  gen->add_option("--classes", cfg.classes);
  gen->add_option("--members-per-class", cfg.members_per_class);
  gen->add_option("--nonmembers-per-class", cfg.nonmembers_per_class);
  gen->add_option("--canaries", cfg.canaries);
  gen->add_option("--duplication", cfg.duplication);
  gen->add_option("--order", cfg.order);
  gen->add_option("--smoothing", cfg.smoothing);
  gen->add_option("--p-drop", cfg.p_drop);
  gen->add_option("--token-dim", cfg.token_dim);
  gen->add_option("--diffusion-steps", cfg.diffusion_steps);
  gen->add_option("--source-concentration", cfg.source_concentration);
  gen->add_option("--class-mix", cfg.class_mix);
  gen->add_option("--max-stickiness", cfg.max_stickiness);
  gen->add_option("--token-noise", cfg.token_noise);

  std::string corpus_path, model_path, trace_path, scores_path;
  std::optional<double> fit_smoothing;
  auto* fit = sim->add_subcommand("fit", "Fit the toy model to a corpus's member set");
  add_common(fit, common);
  fit->add_option("--corpus", corpus_path)->required();
  fit->add_option("--smoothing", fit_smoothing, "Override the corpus's smoothing");

  int timestep = 500;
  double mask_ratio = 0.95;
  int repeats = 64;
  bool no_diff = false, no_repeated = false;
  double sigma = 0.0;
  auto* exp = sim->add_subcommand("export", "Export token traces for every corpus sample");
  add_common(exp, common);
  exp->add_option("--model", model_path)->required();
  exp->add_option("--corpus", corpus_path)->required();
  exp->add_option("--timestep", timestep);
  exp->add_option("--mask-ratio", mask_ratio);
  exp->add_option("--repeats", repeats);
  exp->add_flag("--no-diff", no_diff, "Omit the unconditional and difference blocks");
  exp->add_flag("--no-repeated", no_repeated, "Omit the repeated-pass block");
  exp->add_option("--sigma", sigma, "Output noise of the mitigation");

  auto* attack = app.add_subcommand("attack", "Membership inference");
  attack->require_subcommand(1);
  std::string attack_spec = "grid";
  std::vector<double> k_grid;
  auto* score = attack->add_subcommand("score", "Score every trace sample under every attack");
  add_common(score, common);
  score->add_option("--trace", trace_path)->required();
  score->add_option("--attacks", attack_spec, "grid, default, or a comma list of name:variant[:params]");
  score->add_option("--k-grid", k_grid)->delimiter(',');

  int trials = 100;
  double fpr = 0.01;
  auto* eval = attack->add_subcommand("eval", "AUC, TPR@FPR and randomized summaries");
  add_common(eval, common);
  eval->add_option("--scores", scores_path)->required();
  eval->add_option("--trials", trials)->check(CLI::PositiveNumber);
  eval->add_option("--fpr", fpr);

  auto* di = app.add_subcommand("di", "Dataset inference");
  di->require_subcommand(1);
  double alpha = 0.01;
  std::vector<int> di_grid;
  bool di_null = false;
  std::string di_attacks = "default";
  auto* di_run = di->add_subcommand("run", "Welch test and minimal sample count");
  add_common(di_run, common);
  di_run->add_option("--scores", scores_path)->required();
  di_run->add_option("--attacks", di_attacks, "default, all, or a comma list");
  di_run->add_option("--alpha", alpha);
  di_run->add_option("--di-grid", di_grid)->delimiter(',');
  di_run->add_option("--trials", trials)->check(CLI::PositiveNumber);
  di_run->add_flag("--null", di_null, "Nonmembers against nonmembers (false-positive check)");

  auto* extract_cmd = app.add_subcommand("extract", "Training-data extraction");
  extract_cmd->require_subcommand(1);
  int prefix_len = 0;
  double tau = kDefaultTau;
  int top_n = kDefaultTopN;
  std::vector<int> fp_sweep = {2, 4, 6, 8, 10, 12, 14, 16};
  bool resume = false;
  auto* ext_run = extract_cmd->add_subcommand("run", "Candidates, completion and false-positive check");
  add_common(ext_run, common);
  ext_run->add_option("--model", model_path)->required();
  ext_run->add_option("--corpus", corpus_path)->required();
  ext_run->add_option("--prefix-len", prefix_len, "0 selects the per-mode default");
  ext_run->add_option("--tau", tau);
  ext_run->add_option("--top-n", top_n);
  ext_run->add_option("--fp-sweep", fp_sweep)->delimiter(',');
  ext_run->add_option("--sigma", sigma);
  ext_run->add_flag("--resume", resume, "Reuse candidates.csv from --out when present");

  auto* defend = app.add_subcommand("defend", "Output-noise mitigation");
  defend->require_subcommand(1);
  std::vector<double> sigma_grid = {0.0, 0.5, 1.0, 2.0, 4.0};
  std::string sweep_attacks = "default";
  auto* sweep_cmd = defend->add_subcommand("sweep", "Privacy/utility sweep over noise levels");
  add_common(sweep_cmd, common);
  sweep_cmd->add_option("--model", model_path)->required();
  sweep_cmd->add_option("--corpus", corpus_path)->required();
  sweep_cmd->add_option("--sigma-grid", sigma_grid)->delimiter(',');
  sweep_cmd->add_option("--attacks", sweep_attacks);
  sweep_cmd->add_option("--trials", trials)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--alpha", alpha);
  sweep_cmd->add_option("--di-grid", di_grid)->delimiter(',');
  sweep_cmd->add_option("--prefix-len", prefix_len);
  sweep_cmd->add_option("--tau", tau);
  sweep_cmd->add_option("--timestep", timestep);
  sweep_cmd->add_option("--mask-ratio", mask_ratio);
  sweep_cmd->add_option("--repeats", repeats);

  std::vector<std::string> report_inputs;
  auto* report = app.add_subcommand("report", "Collect outputs of earlier runs into one summary");
  add_common(report, common);
  report->add_option("--in", report_inputs, "Output directories of earlier commands")->required();

  if (argc <= 1) {
    out << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  CLI::App* leaf = &app;
  std::string command;
  while (!leaf->get_subcommands().empty()) {
    leaf = leaf->get_subcommands().front();
    command += (command.empty() ? "" : " ") + leaf->get_name();
  }

  try {
    const std::string seed_source = resolve_seed(leaf, common);
    make_out_dir(common);
    Manifest manifest(command, args);
    auto emit_warnings = [&](const std::vector<std::string>& ws) {
      for (const auto& w : ws) {
        err << "warning: " << w << "\n";
        manifest.warning(w);
      }
    };

    if (leaf == gen) {
      cfg.mode = parse_mode(mode_name);
      cfg.seed = common.seed;
      const Corpus corpus = generate_corpus(cfg);
      const auto path = out_path(common, "corpus.json");
      write_json_file(path, corpus_to_json(corpus));
      manifest.option("config", config_to_json(cfg));
      manifest.output(path);
    } else if (leaf == fit) {
      const Corpus corpus = corpus_from_json(read_json_file(corpus_path));
      manifest.input(corpus_path);
      const auto path = out_path(common, "model.json");
      if (corpus.config.mode == Mode::kDiscrete) {
        write_json_file(path, model_to_json(fit_discrete(corpus, fit_smoothing)));
      } else {
        require(!fit_smoothing, ErrorKind::kUsage, "--smoothing applies to discrete models only");
        write_json_file(path, model_to_json(fit_continuous(corpus)));
      }
      if (fit_smoothing) manifest.option("smoothing", *fit_smoothing);
      manifest.output(path);
    } else if (leaf == exp) {
      const Loaded l = load_model_and_corpus(model_path, corpus_path);
      manifest.input(model_path);
      manifest.input(corpus_path);
      const auto path = out_path(common, "trace.jsonl");
      json generator = simulator_generator(l.model.config());
      generator["sigma"] = sigma;
      TraceFile trace;
      if (l.model.mode == Mode::kDiscrete) {
        DiscreteToyOracle base(l.model.discrete);
        NoisyDiscreteOracle o(base, {sigma, NoiseTarget::kLogits, common.seed});
        DiscreteExportOptions xo{!no_diff, !no_diff, !no_repeated};
        trace = export_discrete_traces(o, l.corpus.samples, xo, common.seed, generator, common.threads);
      } else {
        ContinuousToyOracle base(l.model.continuous);
        NoisyContinuousOracle o(base, {sigma, NoiseTarget::kTokens, common.seed});
        ContinuousExportOptions xo{timestep, mask_ratio, repeats, !no_diff, !no_repeated, common.seed};
        generator["timestep"] = timestep;
        generator["mask_ratio"] = mask_ratio;
        generator["repeats"] = repeats;
        trace = export_continuous_traces(o, l.corpus.samples, xo, generator, common.threads);
      }
      write_trace(path, trace.header, trace.samples);
      manifest.option("timestep", timestep);
      manifest.option("mask_ratio", mask_ratio);
      manifest.option("repeats", repeats);
      manifest.option("include_diff", !no_diff);
      manifest.option("include_repeated", !no_repeated);
      manifest.option("sigma", sigma);
      manifest.output(path);
    } else if (leaf == score) {
      const TraceFile trace = read_trace(trace_path);
      manifest.input(trace_path);
      bool has_diff = false, has_rep = false;
      for (const auto& s : trace.samples) {
        has_diff = has_diff || s.uncond.has_value() || s.uncond_loss.has_value();
        has_rep = has_rep || s.repeated_pass.has_value() || s.repeated_pass_loss.has_value();
      }
      const auto ids = select_attacks(attack_spec, trace.header.mode, has_diff, has_rep, k_grid);
      const ScoreTable table = score_all(trace, ids, common.threads);
      emit_warnings(table.warnings);
      require(!table.rows.empty(), ErrorKind::kNumerical, "no attack could be scored");
      const auto path = out_path(common, "scores.csv");
      write_scores_csv(path, table);
      manifest.option("attacks", attack_spec);
      manifest.option("k_grid", k_grid);
      manifest.output(path);
    } else if (leaf == eval) {
      const ScoreTable table = read_scores_csv(scores_path);
      manifest.input(scores_path);
      LineWriter metrics(out_path(common, "metrics.csv"));
      metrics.write_line(
          "attack,variant,hyperparams,auc,tpr_at_fpr,tpr_mean,tpr_std,auc_mean,auc_std,n_members,n_nonmembers");
      LineWriter roc(out_path(common, "roc.csv"));
      roc.write_line("attack,variant,hyperparams,threshold,fpr,tpr");
      for (const auto& id : table.attacks()) {
        auto m = table.values(id, Split::kMember);
        const auto s = table.values(id, Split::kSuspect);
        m.insert(m.end(), s.begin(), s.end());
        const auto n = table.values(id, Split::kNonmember);
        if (m.empty() || n.empty()) {
          emit_warnings({id.label() + ": empty member or nonmember score set"});
          continue;
        }
        const std::string key =
            to_string(id.name) + "," + to_string(id.variant) + "," + id.hyperparam_string();
        const auto tpr_s = randomized_metric(m, n, tpr_at_fpr_metric(fpr), trials, 0.5, common.seed, common.threads);
        const auto auc_s = randomized_metric(m, n, auc_metric(), trials, 0.5, common.seed, common.threads);
        metrics.write_line(key + "," + format_real(auc(m, n)) + "," + format_real(tpr_at_fpr(m, n, fpr)) + "," +
                           format_real(tpr_s.mean) + "," + format_real(tpr_s.std) + "," + format_real(auc_s.mean) +
                           "," + format_real(auc_s.std) + "," + std::to_string(m.size()) + "," +
                           std::to_string(n.size()));
        for (const auto& p : roc_curve(m, n)) {
          roc.write_line(key + "," + format_real(p.threshold) + "," + format_real(p.fpr) + "," + format_real(p.tpr));
        }
      }
      metrics.close();
      roc.close();
      manifest.option("trials", trials);
      manifest.option("fpr", fpr);
      manifest.output(out_path(common, "metrics.csv"));
      manifest.output(out_path(common, "roc.csv"));
    } else if (leaf == di_run) {
      const ScoreTable table = read_scores_csv(scores_path);
      manifest.input(scores_path);
      std::set<std::string> member_ids, nonmember_ids;
      for (const auto& r : table.rows) {
        (r.split == Split::kNonmember ? nonmember_ids : member_ids).insert(r.sample_id);
      }
      std::vector<std::string> suspect, validation;
      if (di_null) {
        bool flip = false;
        for (const auto& id : nonmember_ids) {
          (flip ? validation : suspect).push_back(id);
          flip = !flip;
        }
      } else {
        suspect.assign(member_ids.begin(), member_ids.end());
        validation.assign(nonmember_ids.begin(), nonmember_ids.end());
      }
      require(suspect.size() >= 2 && validation.size() >= 2, ErrorKind::kNumerical,
              "dataset inference needs at least 2 suspect and 2 validation samples");
      std::vector<AttackId> ids;
      const auto available = table.attacks();
      if (di_attacks == "all") {
        ids = available;
      } else if (di_attacks == "default") {
        for (const auto& id : available) {
          if (id.uses_k() && id.hp.k_percent != 20) continue;
          if (id.name == AttackName::kSurp && id.hp.eps_entropy != 4) continue;
          ids.push_back(id);
        }
      } else {
        ids = select_attacks(di_attacks, Mode::kDiscrete, true, true, {});
      }
      const auto built = build_features(table, suspect, validation, ids);
      emit_warnings(built.warnings);
      const auto scores = normalize_and_aggregate(built.features);
      const auto np = static_cast<std::ptrdiff_t>(built.features.num_suspect);
      const DiReport rep = welch_one_sided(std::span<const double>(scores.data(), static_cast<std::size_t>(np)),
                                           std::span<const double>(scores).subspan(static_cast<std::size_t>(np)), alpha);
      const int max_p = static_cast<int>(std::min(suspect.size(), validation.size()));
      const auto grid = di_grid.empty() ? default_di_grid(max_p) : di_grid;
      const auto mp = minimal_p_search(built.features, grid, trials, alpha, 0.95, common.seed, common.threads);
      json j = {{"suspect_count", suspect.size()},
                {"validation_count", validation.size()},
                {"features", built.features.columns},
                {"full_set",
                 {{"t_statistic", rep.t_statistic},
                  {"degrees_of_freedom", rep.degrees_of_freedom},
                  {"p_value", rep.p_value},
                  {"alpha", rep.alpha},
                  {"rejected", rep.rejected},
                  {"degenerate", rep.degenerate}}},
                {"minimal_p",
                 {{"p_min", mp.p_min ? json(*mp.p_min) : json("not_found")},
                  {"grid", mp.grid},
                  {"rejection_rate", mp.rejection_rate},
                  {"trials", mp.trials},
                  {"alpha", mp.alpha},
                  {"required_rate", mp.required_rate}}},
                {"null_check", di_null}};
      write_json_file(out_path(common, "di.json"), j, 2);
      LineWriter csv(out_path(common, "di.csv"));
      csv.write_line("grid_p,rejection_rate");
      for (std::size_t g = 0; g < mp.grid.size(); ++g) {
        csv.write_line(std::to_string(mp.grid[g]) + "," + format_real(mp.rejection_rate[g]));
      }
      csv.close();
      LineWriter agg(out_path(common, "di_scores.csv"));
      agg.write_line("sample_id,set,aggregated_score");
      for (std::size_t i = 0; i < scores.size(); ++i) {
        agg.write_line(built.features.row_ids[i] + "," +
                       (static_cast<std::ptrdiff_t>(i) < np ? "suspect" : "validation") + "," +
                       format_real(scores[i]));
      }
      agg.close();
      out << "rejected=" << (rep.rejected ? "true" : "false") << " p=" << format_real(rep.p_value)
          << " p_min=" << opt_int(mp.p_min) << "\n";
      manifest.option("alpha", alpha);
      manifest.option("di_grid", grid);
      manifest.option("trials", trials);
      manifest.option("attacks", di_attacks);
      manifest.option("null", di_null);
      for (const char* f : {"di.json", "di.csv", "di_scores.csv"}) manifest.output(out_path(common, f));
    } else if (leaf == ext_run) {
      const Loaded l = load_model_and_corpus(model_path, corpus_path);
      manifest.input(model_path);
      manifest.input(corpus_path);
      const Mode mode = l.model.mode;
      const auto members = l.corpus.with_split(Split::kMember);
      const auto validation = l.corpus.with_split(Split::kNonmember);
      ExtractOptions eo;
      eo.prefix_length = prefix_len > 0 ? prefix_len : default_prefix_length(mode, l.corpus.config.seq_len);
      eo.tau = tau;
      eo.threads = common.threads;
      if (ext_run->count("--fp-sweep") == 0) {
        std::erase_if(fp_sweep, [&](int i) { return i >= l.corpus.config.seq_len; });
      }
      const auto cand_path = out_path(common, "candidates.csv");
      std::vector<ExtractionCandidate> cands;
      std::vector<ExtractionVerdict> verdicts;
      FalsePositiveReport fp;
      auto run_with = [&](const auto& oracle) {
        if (resume && fs::exists(cand_path)) {
          cands = read_candidates_csv(cand_path);
        } else if constexpr (std::is_base_of_v<DiscreteOracle, std::decay_t<decltype(oracle)>>) {
          cands = select_candidates(oracle, members, top_n, common.threads);
        } else {
          cands = select_candidates(oracle, members, top_n, common.seed, common.threads);
        }
        write_candidates_csv(cand_path, cands);
        verdicts = extract(oracle, candidate_samples(cands, members), eo);
        fp = false_positive_check(oracle, validation, eo, fp_sweep);
      };
      if (mode == Mode::kDiscrete) {
        DiscreteToyOracle base(l.model.discrete);
        run_with(NoisyDiscreteOracle(base, {sigma, NoiseTarget::kLogits, common.seed}));
      } else {
        ContinuousToyOracle base(l.model.continuous);
        run_with(NoisyContinuousOracle(base, {sigma, NoiseTarget::kTokens, common.seed}));
      }
      write_extraction_csv(out_path(common, "extraction.csv"), cands, verdicts);
      int canaries_top = 0, canaries_extracted = 0;
      for (std::size_t i = 0; i < cands.size(); ++i) {
        if (!is_canary(cands[i].sample_id)) continue;
        ++canaries_top;
        canaries_extracted += verdicts[i].memorized ? 1 : 0;
      }
      json sweep_json = json::array();
      for (const auto& [i, n] : fp.sweep) sweep_json.push_back({{"prefix_length", i}, {"flagged", n}});
      const auto corr = filter_correlation(cands, verdicts);
      json j = {{"prefix_length", eo.prefix_length},
                {"tau", eo.tau},
                {"top_n", top_n},
                {"candidates", cands.size()},
                {"extracted", count_memorized(verdicts)},
                {"canaries_in_candidates", canaries_top},
                {"canaries_extracted", canaries_extracted},
                {"validation_flagged", fp.flagged},
                {"false_positive_sweep", sweep_json},
                {"max_safe_prefix", fp.max_safe_prefix ? json(*fp.max_safe_prefix) : json(nullptr)},
                {"distance_similarity_spearman", corr ? json(*corr) : json(nullptr)},
                {"similarity", mode == Mode::kDiscrete ? "token_match" : "cosine"}};
      write_json_file(out_path(common, "extraction.json"), j, 2);
      out << "extracted=" << count_memorized(verdicts) << " validation_flagged=" << fp.flagged << "\n";
      manifest.option("prefix_length", eo.prefix_length);
      manifest.option("tau", tau);
      manifest.option("top_n", top_n);
      manifest.option("fp_sweep", fp_sweep);
      manifest.option("sigma", sigma);
      for (const char* f : {"candidates.csv", "extraction.csv", "extraction.json"}) manifest.output(out_path(common, f));
    } else if (leaf == sweep_cmd) {
      const Loaded l = load_model_and_corpus(model_path, corpus_path);
      manifest.input(model_path);
      manifest.input(corpus_path);
      SweepOptions so;
      so.sigmas = sigma_grid;
      so.trials = trials;
      so.alpha = alpha;
      so.di_grid = di_grid;
      so.prefix_length = prefix_len;
      so.tau = tau;
      so.seed = common.seed;
      so.threads = common.threads;
      so.continuous = {timestep, mask_ratio, repeats, true, true, common.seed};
      const Mode mode = l.model.mode;
      if (sweep_attacks != "default") so.attacks = select_attacks(sweep_attacks, mode, true, true, {});
      std::vector<SweepPoint> points;
      if (mode == Mode::kDiscrete) {
        points = sweep(DiscreteToyOracle(l.model.discrete), l.corpus.samples, so);
      } else {
        points = sweep(ContinuousToyOracle(l.model.continuous), l.corpus.samples, so);
      }
      write_sweep_csv(out_path(common, "sweep.csv"), points);
      manifest.option("sigma_grid", sigma_grid);
      manifest.option("trials", trials);
      manifest.option("utility_proxy", "mean held-out NLL (not FID)");
      manifest.output(out_path(common, "sweep.csv"));
    } else if (leaf == report) {
      std::ostringstream md;
      md << "# iaraudit report\n\n";
      for (const auto& dir : report_inputs) {
        const fs::path d(dir);
        require(fs::is_directory(d), ErrorKind::kInput, "not a directory: " + dir);
        manifest.input(dir);
        md << "## " << d.filename().string() << "\n\n";
        bool any = false;
        if (fs::exists(d / "metrics.csv")) {
          any = true;
          md << "Attack metrics (AUC, TPR@FPR, randomized TPR mean/std):\n\n";
          LineReader in((d / "metrics.csv").string());
          in.next();
          md << "| attack | auc | tpr | tpr mean | tpr std |\n|---|---|---|---|---|\n";
          while (auto line = in.next()) {
            std::vector<std::string> f;
            std::stringstream ss(*line);
            std::string cell;
            while (std::getline(ss, cell, ',')) f.push_back(cell);
            if (f.size() < 7) continue;
            md << "| " << f[0] << ":" << f[1] << (f[2] == "-" ? "" : ":" + f[2]) << " | " << f[3] << " | " << f[4]
               << " | " << f[5] << " | " << f[6] << " |\n";
          }
          md << "\n";
        }
        if (fs::exists(d / "di.json")) {
          any = true;
          const json j = read_json_file((d / "di.json").string());
          md << "Dataset inference: rejected=" << j["full_set"]["rejected"].dump()
             << ", p=" << j["full_set"]["p_value"].dump() << ", p_min=" << j["minimal_p"]["p_min"].dump() << "\n\n";
        }
        if (fs::exists(d / "extraction.json")) {
          any = true;
          const json j = read_json_file((d / "extraction.json").string());
          md << "Extraction: extracted=" << j["extracted"].dump()
             << ", canaries_extracted=" << j["canaries_extracted"].dump()
             << ", validation_flagged=" << j["validation_flagged"].dump()
             << ", prefix_length=" << j["prefix_length"].dump() << "\n\n";
        }
        if (fs::exists(d / "sweep.csv")) {
          any = true;
          md << "Noise sweep (utility proxy is held-out NLL, not FID):\n\n```\n";
          LineReader in((d / "sweep.csv").string());
          while (auto line = in.next()) md << *line << "\n";
          md << "```\n\n";
        }
        if (!any) md << "(no recognized outputs)\n\n";
      }
      const auto path = out_path(common, "report.md");
      LineWriter w(path);
      w.write_line(md.str());
      w.close();
      manifest.output(path);
    }
    manifest.write(common, seed_source);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const json::exception& e) {
    err << "error: malformed input: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kInput);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kNumerical);
  }
}

}  // namespace iaraudit::cli
