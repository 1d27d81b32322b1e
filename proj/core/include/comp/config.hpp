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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comp/data.hpp"
#include "comp/nn.hpp"

namespace comp {

enum class LossReduction { kMean, kSum };
/// Regression scores to binary classes: negative (< 0) vs non-negative.
enum class BinarizeRule { kNegativeVsNonNegative, kNegativeVsPositiveStrict };

struct ModelConfig {
  int d = 128;        // shared latent width
  int p = 32;         // prompt width
  int c = 16;         // prototype count
  int L = 3;          // knowledge-propagation blocks
  int m_msa = 2;      // self-attention layers per block
  int heads = 4;
  double lambda = 0.5;
  double mask_neg = -1e9;
  double eps = 1e-8;          // modulation denominator guard
  double cos_eps = 1e-12;     // cosine-similarity norm guard
  double w_min = 0.0;
  double w_max = 1.0;
  double dropout_pg = 0.1;
  LossReduction loss_reduction = LossReduction::kMean;
  BinarizeRule binarize_rule = BinarizeRule::kNegativeVsNonNegative;
  bool separate_error_head = false;

  void validate() const;
};

/// Removable components; true = preserved.
struct Ablation {
  bool kp = true;
  bool pg = true;
  bool cr = true;
  bool gm = true;

  static Ablation all_on() { return {}; }
  static Ablation all_off() { return {false, false, false, false}; }
  /// "1011" in kp,pg,cr,gm order.
  static Ablation from_bits(const std::string& bits);
  std::string bits() const;
  bool operator==(const Ablation&) const = default;
};

struct TrainConfig {
  int epochs_stage1 = 60;
  int epochs_stage2 = 40;
  int batch_n = 32;
  double lr_stage1 = 1e-3;
  double lr_stage2 = 5e-4;
  nn::OptimizerKind optimizer = nn::OptimizerKind::kAdam;
  std::uint64_t seed = 0;
  bool freeze_encoders = false;
  double aux_task_weight = 0.3;
  double test_fraction = 0.2;
  Ablation ablation;
  /// Test hook: replace computed modulation weights with 1.
  bool force_unit_modulation = false;

  void validate() const;
};

/// One file drives every stage: model, training, data source and MR.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  double mr = 0.3;
  std::string data_dir;                    // empty: synthesize from `synthetic`
  SyntheticSpec synthetic;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const SyntheticSpec& s);
nlohmann::json to_json(const ExperimentConfig& c);

ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" overrides in place. The value is parsed as JSON
/// when possible and kept as a string otherwise. Unknown paths are errors.
void apply_overrides(nlohmann::json& config, const std::vector<std::string>& overrides);

/// Parses "a=4,t=1,v=0.25" style per-modality lists.
std::vector<std::pair<Modality, double>> parse_modality_values(const std::string& text);

}  // namespace comp
