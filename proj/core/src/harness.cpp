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

#include "comp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "comp/checkpoint.hpp"
#include "comp/error.hpp"

namespace comp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json curve_json(const EpochLog& e) {
  json j = to_json(e);
  j.erase("wall_time");
  return j;
}

json acc_json(const std::array<double, kNumModalities>& v) {
  json j = json::object();
  for (int u = 0; u < kNumModalities; ++u) j[std::string(modality_name(kModalities[u]))] = v[u];
  return j;
}

std::array<double, kNumModalities> acc_from_json(const json& j) {
  std::array<double, kNumModalities> v{};
  for (int u = 0; u < kNumModalities; ++u) v[u] = j.at(std::string(modality_name(kModalities[u]))).get<double>();
  return v;
}

json ablation_json(const Ablation& a) { return {{"kp", a.kp}, {"pg", a.pg}, {"cr", a.cr}, {"gm", a.gm}}; }

Ablation ablation_from_json(const json& j) {
  return {j.at("kp").get<bool>(), j.at("pg").get<bool>(), j.at("cr").get<bool>(), j.at("gm").get<bool>()};
}

}  // namespace

json to_json(const RunReport& r) {
  json j;
  j["dataset_id"] = r.dataset_id;
  j["task"] = std::string(task_name(r.task));
  j["stage"] = r.stage;
  j["mr"] = r.mr;
  j["effective_mr"] = r.effective_mr;
  j["seed"] = r.seed;
  j["ablation"] = ablation_json(r.ablation);
  j["metrics"] = to_json(r.metrics);
  j["per_modality_acc"] = acc_json(r.per_modality_acc);
  if (r.stage1_modality_acc) j["stage1_modality_acc"] = acc_json(*r.stage1_modality_acc);
  j["coordinator_weight_means"] = r.coordinator_weight_means;
  j["epoch_curves"] = json::array();
  for (const auto& e : r.epoch_curves) j["epoch_curves"].push_back(curve_json(e));
  return j;
}

RunReport run_report_from_json(const json& j) {
  RunReport r;
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.task = parse_task(j.at("task").get<std::string>());
  r.stage = j.value("stage", "all");
  r.mr = j.at("mr").get<double>();
  r.effective_mr = j.value("effective_mr", r.mr);
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ablation = ablation_from_json(j.at("ablation"));
  r.metrics = metrics_from_json(j.at("metrics"));
  r.per_modality_acc = acc_from_json(j.at("per_modality_acc"));
  if (j.contains("stage1_modality_acc")) r.stage1_modality_acc = acc_from_json(j.at("stage1_modality_acc"));
  r.coordinator_weight_means = j.at("coordinator_weight_means").get<std::array<double, kNumModalities>>();
  for (const auto& e : j.value("epoch_curves", json::array())) r.epoch_curves.push_back(epoch_log_from_json(e));
  return r;
}

Dataset load_dataset(const ExperimentConfig& config) {
  if (!config.data_dir.empty()) return read_dataset(config.data_dir);
  return generate_synthetic(config.synthetic);
}

MissingMask run_mask(const Dataset& dataset, const ExperimentConfig& config) {
  if (dataset.mask) {
    spdlog::warn("dataset '{}' carries its own mask; configured MR {} ignored", dataset.name, config.mr);
    return *dataset.mask;
  }
  return make_missing_mask(dataset.n_samples(), kNumModalities, config.mr, config.train.seed);
}

Split run_split(const Dataset& dataset, const ExperimentConfig& config) {
  return make_split(dataset.n_samples(), config.train.test_fraction, Rng(config.train.seed).derive("split"));
}

RunReport run_experiment(const Dataset& dataset, const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (options.stage != "1" && options.stage != "2" && options.stage != "all") {
    throw ValidationError("stage must be 1, 2 or all (got '" + options.stage + "')");
  }
  if (options.stage == "2" && !options.init_checkpoint) {
    throw ValidationError("stage 2 needs a stage-1 checkpoint to start from");
  }
  const std::uint64_t seed = config.train.seed;
  const MissingMask mask = run_mask(dataset, config);
  const Split split = run_split(dataset, config);
  const Rng root(seed);
  ComPModel model(config.model, shape_for(dataset, config.train.batch_n), root.derive("init"));
  if (options.init_checkpoint) load_parameters_into(*options.init_checkpoint, model);
  Trainer trainer(model, dataset, mask, split, config.train, root.derive("train"));

  json resolved = to_json(config);
  resolved["stage"] = options.stage;
  std::ofstream log;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    std::ofstream(options.out_dir / "config.json") << resolved.dump(2) << '\n';
    write_mask_file(options.out_dir / "mask.txt", mask);
    log.open(options.out_dir / "train_log.jsonl");
  }
  RunReport report;
  report.dataset_id = dataset.name;
  report.task = dataset.labels.task;
  report.stage = options.stage;
  report.mr = options.requested_mr.value_or(config.mr);
  report.effective_mr = mask.mr;
  report.seed = seed;
  report.ablation = config.train.ablation;
  const LogSink sink = [&](const EpochLog& e) {
    report.epoch_curves.push_back(e);
    if (log.is_open()) log << to_json(e).dump() << '\n' << std::flush;
  };

  if (options.stage != "2") {
    trainer.train_stage1(sink);
    const EvalResult s1 = evaluate_stage1(model, dataset, mask, split.test);
    std::array<double, kNumModalities> accs{};
    std::size_t best = 0;
    for (std::size_t u = 0; u < kNumModalities; ++u) {
      accs[u] = s1.modality[u].acc;
      if (accs[u] > accs[best]) best = u;
    }
    report.stage1_modality_acc = accs;
    report.per_modality_acc = accs;
    report.metrics = s1.modality[best];
    if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "stage1.ckpt", model, resolved, seed);
  }
  if (options.stage != "1") {
    trainer.train_stage2(sink);
    const EvalResult s2 = evaluate(model, dataset, mask, split.test, config.train.ablation);
    report.metrics = *s2.fused;
    for (std::size_t u = 0; u < kNumModalities; ++u) report.per_modality_acc[u] = s2.modality[u].acc;
    report.coordinator_weight_means = s2.coordinator_weight_means;
  }
  if (!options.out_dir.empty()) {
    save_checkpoint(options.out_dir / "model.ckpt", model, resolved, seed);
    std::ofstream(options.out_dir / "report.json") << to_json(report).dump(2) << '\n';
  }
  return report;
}

std::vector<SummaryRow> summarize(const std::vector<RunReport>& reports) {
  std::vector<SummaryRow> rows;
  for (const auto& r : reports) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& s) {
      return s.mr == r.mr && s.ablation == r.ablation;
    });
    if (it == rows.end()) {
      rows.push_back(SummaryRow{r.mr, 0.0, r.ablation, 0, {}, {}, {}});
      it = rows.end() - 1;
    }
    ++it->seeds;
    it->effective_mr += r.effective_mr;
    it->metrics.acc += r.metrics.acc;
    it->metrics.ua += r.metrics.ua;
    it->metrics.f1 += r.metrics.f1;
    for (int u = 0; u < kNumModalities; ++u) {
      it->per_modality_acc[u] += r.per_modality_acc[u];
      it->coordinator_weight_means[u] += r.coordinator_weight_means[u];
    }
  }
  for (auto& s : rows) {
    const double k = s.seeds;
    s.effective_mr /= k;
    s.metrics.acc /= k;
    s.metrics.ua /= k;
    s.metrics.f1 /= k;
    for (int u = 0; u < kNumModalities; ++u) {
      s.per_modality_acc[u] /= k;
      s.coordinator_weight_means[u] /= k;
    }
  }
  return rows;
}

namespace {

struct Cell {
  double requested_mr;
  double mr;  // possibly saturated
  Ablation ablation;
  std::uint64_t seed;
};

std::string run_name(const Cell& c) {
  std::ostringstream os;
  os << "mr" << std::fixed << std::setprecision(2) << c.requested_mr << "_" << c.ablation.bits() << "_seed"
     << c.seed;
  return os.str();
}

GridResult run_grid(const Dataset& dataset, const ExperimentConfig& config, const std::vector<Cell>& cells,
                    const GridOptions& options) {
  GridResult result;
  result.reports.resize(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        ExperimentConfig cfg = config;
        cfg.mr = cells[i].mr;
        cfg.train.seed = cells[i].seed;
        cfg.train.ablation = cells[i].ablation;
        RunOptions ro;
        ro.stage = options.stage;
        ro.requested_mr = cells[i].requested_mr;
        if (!options.out_dir.empty()) ro.out_dir = options.out_dir / "runs" / run_name(cells[i]);
        spdlog::info("run {}/{}: mr={} ablation={} seed={}", i + 1, cells.size(), cells[i].requested_mr,
                     cells[i].ablation.bits(), cells[i].seed);
        result.reports[i] = run_experiment(dataset, cfg, ro);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int jobs = std::clamp(options.jobs, 1, static_cast<int>(std::max<std::size_t>(cells.size(), 1)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  result.summary = summarize(result.reports);
  if (!options.out_dir.empty()) write_grid_artifacts(options.out_dir, result);
  return result;
}

}  // namespace

GridResult mr_sweep(const Dataset& dataset, const ExperimentConfig& config, const std::vector<double>& mr_list,
                    const std::vector<std::uint64_t>& seeds, const GridOptions& options) {
  if (mr_list.empty() || seeds.empty()) throw ValidationError("mr_sweep: need at least one MR and one seed");
  const double max_mr = max_feasible_mr(kNumModalities);
  std::vector<Cell> cells;
  for (double mr : mr_list) {
    if (!(mr >= 0.0)) throw ValidationError("mr_sweep: MR must be >= 0");
    double eff = mr;
    if (mr > max_mr + 1e-12) {
      spdlog::warn("MR {} is infeasible with {} modalities when every sample keeps one; running at {:.4f}", mr,
                   kNumModalities, max_mr);
      eff = max_mr;
    }
    for (auto s : seeds) cells.push_back({mr, eff, config.train.ablation, s});
  }
  return run_grid(dataset, config, cells, options);
}

GridResult ablation_grid(const Dataset& dataset, const ExperimentConfig& config, std::vector<Ablation> rows,
                         const std::vector<std::uint64_t>& seeds, const GridOptions& options) {
  if (rows.empty() || seeds.empty()) throw ValidationError("ablation_grid: need at least one row and one seed");
  std::vector<Ablation> unique;
  for (const auto& r : rows) {
    if (std::find(unique.begin(), unique.end(), r) != unique.end()) {
      spdlog::warn("duplicate ablation row {} dropped", r.bits());
      continue;
    }
    unique.push_back(r);
  }
  std::vector<Cell> cells;
  for (const auto& r : unique) {
    for (auto s : seeds) cells.push_back({config.mr, config.mr, r, s});
  }
  return run_grid(dataset, config, cells, options);
}

std::vector<Ablation> ablation_table_rows() {
  std::vector<Ablation> rows;
  for (const char* bits : {"0000", "1000", "1100", "1110", "0111", "1011", "1101", "1111"}) {
    rows.push_back(Ablation::from_bits(bits));
  }
  return rows;
}

namespace {

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string flag_label(const Ablation& a) {
  std::string s;
  auto mark = [&](bool on, const char* name) {
    if (!s.empty()) s += " ";
    s += std::string(on ? "+" : "-") + name;
  };
  mark(a.kp, "KP");
  mark(a.pg, "PG");
  mark(a.cr, "Cr");
  mark(a.gm, "GM");
  return s;
}

}  // namespace

void write_grid_artifacts(const fs::path& dir, const GridResult& result) {
  fs::create_directories(dir);
  const bool regression = !result.reports.empty() && result.reports.front().task == Task::kRegression;

  std::ofstream runs(dir / "runs.csv");
  runs << "dataset,mr,effective_mr,seed,ablation,acc,ua,f1,acc_a,acc_t,acc_v,w_a,w_t,w_v\n";
  auto row = [&](const std::string& ds, double mr, double eff, const std::string& seed, const Ablation& a,
                 const Metrics& m, const std::array<double, 3>& acc, const std::array<double, 3>& w) {
    runs << ds << ',' << num(mr) << ',' << num(eff) << ',' << seed << ',' << a.bits() << ',' << num(m.acc) << ','
         << num(m.ua) << ',' << num(m.f1);
    for (double v : acc) runs << ',' << num(v);
    for (double v : w) runs << ',' << num(v);
    runs << '\n';
  };
  for (const auto& r : result.reports) {
    row(r.dataset_id, r.mr, r.effective_mr, std::to_string(r.seed), r.ablation, r.metrics, r.per_modality_acc,
        r.coordinator_weight_means);
  }
  const std::string ds = result.reports.empty() ? "" : result.reports.front().dataset_id;
  for (const auto& s : result.summary) {
    row(ds, s.mr, s.effective_mr, "mean", s.ablation, s.metrics, s.per_modality_acc, s.coordinator_weight_means);
  }

  // Methods down, MR across; cells are seed means.
  std::vector<double> mrs;
  std::vector<Ablation> methods;
  for (const auto& s : result.summary) {
    if (std::find(mrs.begin(), mrs.end(), s.mr) == mrs.end()) mrs.push_back(s.mr);
    if (std::find(methods.begin(), methods.end(), s.ablation) == methods.end()) methods.push_back(s.ablation);
  }
  std::ofstream table(dir / "table.md");
  const char* second = regression ? "F1" : "UA";
  table << "| Components |";
  for (double mr : mrs) table << " MR " << num(mr) << " ACC(%)/" << second << "(%) |";
  table << "\n|---|";
  for (std::size_t i = 0; i < mrs.size(); ++i) table << "---|";
  table << '\n';
  for (const auto& a : methods) {
    table << "| " << flag_label(a) << " |";
    for (double mr : mrs) {
      auto it = std::find_if(result.summary.begin(), result.summary.end(),
                             [&](const SummaryRow& s) { return s.mr == mr && s.ablation == a; });
      if (it == result.summary.end()) {
        table << " - |";
      } else {
        table << ' ' << pct(it->metrics.acc) << '/' << pct(regression ? it->metrics.f1 : it->metrics.ua) << " |";
      }
    }
    table << '\n';
  }

  std::ofstream curves(dir / "curves.csv");
  curves << "mr,ablation,seed,stage,epoch,loss,acc_a,acc_t,acc_v,acc_fused\n";
  for (const auto& r : result.reports) {
    for (const auto& e : r.epoch_curves) {
      curves << num(r.mr) << ',' << r.ablation.bits() << ',' << r.seed << ',' << e.stage << ',' << e.epoch << ','
             << num(e.loss);
      for (double v : e.modality_acc) curves << ',' << num(v);
      curves << ',' << (e.fused_acc ? num(*e.fused_acc) : "") << '\n';
    }
  }

  std::ofstream weights(dir / "coordinator_weights.csv");
  weights << "mr,ablation,modality,mean_weight\n";
  for (const auto& s : result.summary) {
    for (int u = 0; u < kNumModalities; ++u) {
      weights << num(s.mr) << ',' << s.ablation.bits() << ',' << modality_name(kModalities[u]) << ','
              << num(s.coordinator_weight_means[u]) << '\n';
    }
  }
}

std::vector<RunReport> collect_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "report.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunReport> reports;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      reports.push_back(run_report_from_json(json::parse(in)));
    } catch (const json::exception& e) {
      throw ValidationError("bad report " + f.string() + ": " + e.what());
    }
  }
  return reports;
}

std::vector<double> parse_mr_list(const std::string& text) {
  auto to_double = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ValidationError("bad MR list '" + text + "'");
    }
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(to_double(item));
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
      throw ValidationError("MR range must be start:stop:step with step > 0 (got '" + text + "')");
    }
    // Index-based so 0.1:0.7:0.1 yields exactly 7 values, rounded to kill drift.
    const auto count = static_cast<int>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1;
    for (int i = 0; i < count; ++i) out.push_back(std::round((parts[0] + i * parts[2]) * 1e9) / 1e9);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(to_double(item));
  }
  if (out.empty()) throw ValidationError("empty MR list");
  return out;
}

}  // namespace comp
