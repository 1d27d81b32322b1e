/* Copyright 2026 The ComP Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "comp/checkpoint.hpp"
#include "comp/error.hpp"
#include "comp/harness.hpp"

namespace comp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags shared by the commands that build an experiment config.
struct ConfigFlags {
  std::string config_path;
  std::string data_dir;
  std::vector<std::string> overrides;
  std::string off;
  std::optional<std::uint64_t> seed;
  std::optional<double> mr;

  void attach(CLI::App* cmd, bool with_mr) {
    cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--data", data_dir, "dataset directory (default: synthesize)")->check(CLI::ExistingDirectory);
    cmd->add_option("--set", overrides, "dotted key=value override, repeatable");
    cmd->add_option("--off", off, "components to remove: any of kp,pg,cr,gm");
    cmd->add_option("--seed", seed, "run seed (fallback: config, then COMP_SEED)");
    if (with_mr) cmd->add_option("--mr", mr, "missing rate");
  }
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("bad JSON in " + path + ": " + e.what());
  }
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("COMP_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(raw, &used);
    if (used != std::string(raw).size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string("COMP_SEED is not an unsigned integer: ") + raw);
  }
}

ExperimentConfig resolve(const ConfigFlags& f) {
  json j = f.config_path.empty() ? json::object() : read_json_file(f.config_path);
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  j.erase("stage");  // run-only key written next to each run's config
  apply_overrides(j, f.overrides);
  if (!f.data_dir.empty()) j["data"]["dir"] = f.data_dir;
  if (f.mr) j["mr"] = *f.mr;
  if (!f.off.empty()) {
    std::stringstream ss(f.off);
    std::string flag;
    while (std::getline(ss, flag, ',')) {
      if (flag != "kp" && flag != "pg" && flag != "cr" && flag != "gm") {
        throw ValidationError("--off takes kp, pg, cr, gm (got '" + flag + "')");
      }
      j["train"][flag] = false;
    }
  }
  const bool seed_in_config = j.contains("train") && j["train"].contains("seed");
  if (f.seed) {
    j["train"]["seed"] = *f.seed;
  } else if (!seed_in_config) {
    if (auto s = env_seed()) j["train"]["seed"] = *s;
  }
  return experiment_config_from_json(j);
}

std::vector<std::uint64_t> seed_range(std::uint64_t base, int count) {
  if (count < 1) throw ValidationError("--seeds must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
  return seeds;
}

void print_summary(const GridResult& r) {
  for (const auto& s : r.summary) {
    std::cout << "mr=" << s.mr << " ablation=" << s.ablation.bits() << " seeds=" << s.seeds
              << " acc=" << s.metrics.acc << " ua=" << s.metrics.ua << " f1=" << s.metrics.f1 << '\n';
  }
}

// Checkpointed run config minus run-only keys.
ExperimentConfig config_of_checkpoint(const json& run_config, const std::string& data_override) {
  json j = run_config;
  j.erase("stage");
  if (!data_override.empty()) j["data"]["dir"] = data_override;
  return experiment_config_from_json(j);
}

std::vector<std::size_t> select_split(const Dataset& dataset, const ExperimentConfig& config,
                                      const std::string& which) {
  if (which == "all") {
    std::vector<std::size_t> all(static_cast<std::size_t>(dataset.n_samples()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  const Split split = run_split(dataset, config);
  if (which == "test") return split.test;
  if (which == "train") return split.train;
  throw ValidationError("--split must be train, test or all");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"ComP: incomplete multi-modal training and evaluation"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset directory");
  std::string synth_config, synth_out, snr, dims, synth_name;
  std::optional<int> synth_n, synth_classes, synth_latent;
  std::optional<double> synth_sep;
  std::optional<std::string> synth_task;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "take data.synthetic from this config")->check(CLI::ExistingFile);
  synth->add_option("--n", synth_n, "samples");
  synth->add_option("--classes", synth_classes, "classes");
  synth->add_option("--snr", snr, "per-modality SNR, e.g. a=4,t=1,v=0.25");
  synth->add_option("--dims", dims, "per-modality feature width, e.g. a=16,t=16,v=16");
  synth->add_option("--latent-dim", synth_latent, "latent width");
  synth->add_option("--sep", synth_sep, "class separation");
  synth->add_option("--task", synth_task, "classification or regression");
  synth->add_option("--name", synth_name, "dataset name");
  synth->add_option("--seed", synth_seed, "generator seed (fallback: COMP_SEED)");
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train one run");
  ConfigFlags train_flags;
  train_flags.attach(train, true);
  std::string stage = "all", train_out, init_ckpt;
  train->add_option("--stage", stage, "1, 2 or all")->check(CLI::IsMember({"1", "2", "all"}));
  train->add_option("--checkpoint", init_ckpt, "stage-1 checkpoint to start stage 2 from")
      ->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "run directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_out, eval_split = "test";
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "dataset directory (default: the run's)")->check(CLI::ExistingDirectory);
  eval->add_option("--split", eval_split, "train, test or all");
  eval->add_option("--out", eval_out, "directory for eval.json");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "train and evaluate over missing rates and seeds");
  ConfigFlags sweep_flags;
  sweep_flags.attach(sweep, false);
  std::string mr_text = "0.1,0.3,0.5,0.7", sweep_out;
  int sweep_seeds = 1, sweep_jobs = 1;
  sweep->add_option("--mr", mr_text, "list (0.1,0.3) or range (0.1:0.7:0.1)");
  sweep->add_option("--seeds", sweep_seeds, "number of seeds, counting up from the run seed");
  sweep->add_option("--jobs", sweep_jobs, "parallel runs");
  sweep->add_option("--out", sweep_out, "output directory")->required();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "component ablation grid");
  ConfigFlags ablate_flags;
  ablate_flags.attach(ablate, true);
  std::string rows_text, ablate_out;
  int ablate_seeds = 1, ablate_jobs = 1;
  ablate->add_option("--rows", rows_text, "kp,pg,cr,gm bit rows, e.g. 0000,1111 (default: all eight)");
  ablate->add_option("--seeds", ablate_seeds, "number of seeds");
  ablate->add_option("--jobs", ablate_jobs, "parallel runs");
  ablate->add_option("--out", ablate_out, "output directory")->required();

  // export
  auto* exp = app.add_subcommand("export", "write Z, Z_bar or F for external projection");
  std::string exp_ckpt, exp_data, exp_out, exp_which = "F", exp_split = "all";
  exp->add_option("--checkpoint", exp_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  exp->add_option("--which", exp_which, "Z, Z_bar or F");
  exp->add_option("--data", exp_data, "dataset directory (default: the run's)")->check(CLI::ExistingDirectory);
  exp->add_option("--split", exp_split, "train, test or all");
  exp->add_option("--out", exp_out, "output directory")->required();

  // report
  auto* report = app.add_subcommand("report", "rebuild tables from report.json files");
  std::string report_in, report_out;
  report->add_option("--in", report_in, "directory searched for report.json")->required()
      ->check(CLI::ExistingDirectory);
  report->add_option("--out", report_out, "output directory (default: --in)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    if (*synth) {
      SyntheticSpec spec;
      if (!synth_config.empty()) {
        const json j = read_json_file(synth_config);
        if (j.contains("data") && j["data"].contains("synthetic")) {
          spec = synthetic_spec_from_json(j["data"]["synthetic"]);
        }
      }
      if (synth_n) spec.n_samples = *synth_n;
      if (synth_classes) spec.num_classes = *synth_classes;
      if (synth_latent) spec.latent_dim = *synth_latent;
      if (synth_sep) spec.class_sep = *synth_sep;
      if (synth_task) spec.task = parse_task(*synth_task);
      if (!synth_name.empty()) spec.name = synth_name;
      if (!snr.empty()) {
        for (auto [m, v] : parse_modality_values(snr)) spec.modalities[static_cast<std::size_t>(m)].snr = v;
      }
      if (!dims.empty()) {
        for (auto [m, v] : parse_modality_values(dims)) {
          if (v < 1 || v != static_cast<int>(v)) throw ValidationError("--dims takes positive integers");
          spec.modalities[static_cast<std::size_t>(m)].dim = static_cast<int>(v);
        }
      }
      if (synth_seed) {
        spec.seed = *synth_seed;
      } else if (auto s = env_seed()) {
        spec.seed = *s;
      }
      const Dataset ds = generate_synthetic(spec);
      write_dataset(synth_out, ds);
      std::cout << "wrote " << ds.n_samples() << " samples to " << synth_out << '\n';
    } else if (*train) {
      const ExperimentConfig config = resolve(train_flags);
      const Dataset dataset = load_dataset(config);
      RunOptions ro;
      ro.stage = stage;
      ro.out_dir = train_out;
      if (!init_ckpt.empty()) ro.init_checkpoint = fs::path(init_ckpt);
      const RunReport r = run_experiment(dataset, config, ro);
      std::cout << "acc=" << r.metrics.acc << " ua=" << r.metrics.ua << " f1=" << r.metrics.f1 << " (" << train_out
                << ")\n";
    } else if (*eval) {
      LoadedCheckpoint ck = load_checkpoint(eval_ckpt);
      const ExperimentConfig config = config_of_checkpoint(ck.run_config, eval_data);
      const Dataset dataset = load_dataset(config);
      const MissingMask mask = run_mask(dataset, config);
      const auto indices = select_split(dataset, config, eval_split);
      const bool stage1_only = ck.run_config.value("stage", "all") == "1";
      const EvalResult r = stage1_only ? evaluate_stage1(ck.model, dataset, mask, indices)
                                       : evaluate(ck.model, dataset, mask, indices, config.train.ablation);
      json out;
      out["split"] = eval_split;
      out["n"] = indices.size();
      if (r.fused) out["metrics"] = to_json(*r.fused);
      out["per_modality"] = json::object();
      for (int u = 0; u < kNumModalities; ++u) {
        out["per_modality"][std::string(modality_name(kModalities[u]))] = to_json(r.modality[u]);
      }
      out["coordinator_weight_means"] = r.coordinator_weight_means;
      out["config"] = ck.run_config;
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        std::ofstream(fs::path(eval_out) / "eval.json") << out.dump(2) << '\n';
      }
      out.erase("config");
      std::cout << out.dump() << '\n';
    } else if (*sweep) {
      const ExperimentConfig config = resolve(sweep_flags);
      const Dataset dataset = load_dataset(config);
      GridOptions go;
      go.out_dir = sweep_out;
      go.jobs = sweep_jobs;
      const auto result =
          mr_sweep(dataset, config, parse_mr_list(mr_text), seed_range(config.train.seed, sweep_seeds), go);
      std::ofstream(fs::path(sweep_out) / "config.json") << to_json(config).dump(2) << '\n';
      print_summary(result);
    } else if (*ablate) {
      const ExperimentConfig config = resolve(ablate_flags);
      const Dataset dataset = load_dataset(config);
      std::vector<Ablation> rows;
      if (rows_text.empty()) {
        rows = ablation_table_rows();
      } else {
        std::stringstream ss(rows_text);
        std::string bits;
        while (std::getline(ss, bits, ',')) rows.push_back(Ablation::from_bits(bits));
      }
      GridOptions go;
      go.out_dir = ablate_out;
      go.jobs = ablate_jobs;
      const auto result = ablation_grid(dataset, config, rows, seed_range(config.train.seed, ablate_seeds), go);
      std::ofstream(fs::path(ablate_out) / "config.json") << to_json(config).dump(2) << '\n';
      print_summary(result);
    } else if (*exp) {
      LoadedCheckpoint ck = load_checkpoint(exp_ckpt);
      const ExperimentConfig config = config_of_checkpoint(ck.run_config, exp_data);
      const Dataset dataset = load_dataset(config);
      const MissingMask mask = run_mask(dataset, config);
      const auto indices = select_split(dataset, config, exp_split);
      const json manifest = export_embeddings(ck.model, dataset, mask, indices, parse_embedding_kind(exp_which),
                                              config.train.ablation, exp_out);
      std::cout << "wrote " << manifest["embedding"].get<std::string>() << " for " << indices.size()
                << " samples to " << exp_out << '\n';
    } else if (*report) {
      GridResult result;
      result.reports = collect_reports(report_in);
      if (result.reports.empty()) throw ValidationError("no report.json under " + report_in);
      result.summary = summarize(result.reports);
      write_grid_artifacts(report_out.empty() ? report_in : report_out, result);
      print_summary(result);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace comp::cli
