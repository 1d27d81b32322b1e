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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comp/config.hpp"
#include "comp/evaluation.hpp"
#include "comp/training.hpp"

namespace comp {

struct RunReport {
  std::string dataset_id;
  Task task = Task::kClassification;
  std::string stage = "all";
  double mr = 0.0;            // as requested
  double effective_mr = 0.0;  // what the mask actually has
  std::uint64_t seed = 0;
  Ablation ablation;
  Metrics metrics;  // fused (stage 2) or best stage-1 modality (stage 1 only)
  std::array<double, kNumModalities> per_modality_acc{};
  std::optional<std::array<double, kNumModalities>> stage1_modality_acc;
  std::array<double, kNumModalities> coordinator_weight_means{1.0, 1.0, 1.0};
  std::vector<EpochLog> epoch_curves;
};

/// Wall time is left out so that reports of identical runs compare equal.
nlohmann::json to_json(const RunReport& r);
RunReport run_report_from_json(const nlohmann::json& j);

/// Loads `data_dir` when set, otherwise synthesizes from `synthetic`.
Dataset load_dataset(const ExperimentConfig& config);

/// Missingness and split of a run; fixed by (dataset, mr, seed).
MissingMask run_mask(const Dataset& dataset, const ExperimentConfig& config);
Split run_split(const Dataset& dataset, const ExperimentConfig& config);

struct RunOptions {
  std::string stage = "all";  // "1", "2" or "all"
  std::filesystem::path out_dir;  // empty: no artifacts
  /// Parameters to start from (required for stage "2").
  std::optional<std::filesystem::path> init_checkpoint;
  /// MR to report when config.mr was saturated from a larger request.
  std::optional<double> requested_mr;
};

/// Mask from (mr, seed), split and init from streams of Rng(seed), then
/// train and evaluate. Writes config.json, mask.txt, train_log.jsonl,
/// checkpoints and report.json under out_dir.
RunReport run_experiment(const Dataset& dataset, const ExperimentConfig& config, const RunOptions& options = {});

/// Mean over seeds of one (mr, ablation) cell.
struct SummaryRow {
  double mr = 0.0;
  double effective_mr = 0.0;
  Ablation ablation;
  int seeds = 0;
  Metrics metrics;
  std::array<double, kNumModalities> per_modality_acc{};
  std::array<double, kNumModalities> coordinator_weight_means{};
};

struct GridResult {
  std::vector<RunReport> reports;  // cell-major, seeds inner
  std::vector<SummaryRow> summary;
};

struct GridOptions {
  std::filesystem::path out_dir;  // empty: no artifacts
  int jobs = 1;
  std::string stage = "all";
};

/// MR above the feasible maximum is saturated to it with a warning; the
/// report keeps the requested value next to the effective one.
GridResult mr_sweep(const Dataset& dataset, const ExperimentConfig& config, const std::vector<double>& mr_list,
                    const std::vector<std::uint64_t>& seeds, const GridOptions& options = {});

/// One run per row and seed at config.mr; rows share masks and splits.
/// Duplicate rows are dropped with a warning.
GridResult ablation_grid(const Dataset& dataset, const ExperimentConfig& config, std::vector<Ablation> rows,
                         const std::vector<std::uint64_t>& seeds, const GridOptions& options = {});

/// The eight rows of the component ablation table, kp,pg,cr,gm order.
std::vector<Ablation> ablation_table_rows();

std::vector<SummaryRow> summarize(const std::vector<RunReport>& reports);

/// runs.csv, table.md, curves.csv and coordinator_weights.csv.
void write_grid_artifacts(const std::filesystem::path& dir, const GridResult& result);

/// Collects every report.json below `dir`.
std::vector<RunReport> collect_reports(const std::filesystem::path& dir);

/// Parses "0.1:0.7:0.1" or "0.1,0.3,0.5".
std::vector<double> parse_mr_list(const std::string& text);

}  // namespace comp
