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
#include <optional>
#include <vector>

#include "comp/config.hpp"
#include "comp/encoders.hpp"
#include "comp/fusion.hpp"
#include "comp/prompting.hpp"
#include "comp/propagation.hpp"

namespace comp {

/// Sizes fixed by the data: per-modality input widths, task and the batch
/// size the prototype compression layer is built for.
struct ModelShape {
  std::array<int, kNumModalities> input_dims{};
  Task task = Task::kClassification;
  int num_classes = 2;
  int batch_n = 32;

  int outputs() const { return task == Task::kClassification ? num_classes : 1; }
  bool operator==(const ModelShape&) const = default;
};

nlohmann::json to_json(const ModelShape& s);
ModelShape model_shape_from_json(const nlohmann::json& j);
ModelShape shape_for(const Dataset& dataset, int batch_n);

struct Stage1Forward {
  std::array<ag::Var, kNumModalities> z;
  std::array<ag::Var, kNumModalities> reconstruction;
  std::array<ag::Var, kNumModalities> predictions;
};

struct Stage2Forward {
  std::array<ag::Var, kNumModalities> z;
  std::array<ag::Var, kNumModalities> z_bar;
  std::array<ag::Var, kNumModalities> modality_predictions;
  std::array<ag::Var, kNumModalities> error_head_predictions;  // only with separate_error_head
  ag::Var omega;      // undefined when the coordinator is ablated
  ag::Var omega_bar;  // undefined when the coordinator is ablated
  ag::Var fused;      // F
  ag::Var fused_predictions;
};

class ComPModel {
 public:
  ComPModel(const ModelConfig& config, const ModelShape& shape, Rng init_rng);

  Stage1Forward forward_stage1(const Batch& batch) const;

  /// Full stage-2 graph. Prototypes are learned and frozen at the start and
  /// released at the end of the call. dropout_rng null disables dropout.
  Stage2Forward forward(const Batch& batch, const Ablation& ablation, Rng* dropout_rng,
                        propagation::PipelineTrace* trace = nullptr);

  nn::ParameterList parameters() const;
  nn::ParameterList stage1_parameters() const;
  nn::ParameterList stage2_parameters(bool freeze_encoders) const;
  /// M^u of each modality (the weight of g^u).
  std::array<ag::Var, kNumModalities> compression_weights() const;

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  const ModelShape& shape() const { return shape_; }

  std::array<encoders::ModalityEncoderStack, kNumModalities>& encoders() { return encoders_; }
  const std::array<encoders::ModalityEncoderStack, kNumModalities>& encoders() const { return encoders_; }
  std::array<prompting::PrototypeBank, kNumModalities>& banks() { return banks_; }
  std::vector<propagation::BlockWeights>& blocks() { return blocks_; }
  fusion::Coordinator& coordinator() { return coordinator_; }
  fusion::FusionClassifier& classifier() { return classifier_; }
  const fusion::FusionClassifier& classifier() const { return classifier_; }

 private:
  ModelConfig config_;
  ModelShape shape_;
  std::array<encoders::ModalityEncoderStack, kNumModalities> encoders_;
  std::array<prompting::PrototypeBank, kNumModalities> banks_;
  std::vector<propagation::BlockWeights> blocks_;
  std::array<nn::Linear, kNumModalities> error_heads_;
  fusion::Coordinator coordinator_;
  fusion::FusionClassifier classifier_;
};

}  // namespace comp
