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
#include <vector>

#include "comp/config.hpp"
#include "comp/data.hpp"
#include "comp/nn.hpp"

namespace comp::fusion {

using ag::Var;

struct TaskTargets {
  Task task = Task::kClassification;
  std::vector<int> classes;
  Vector scores;

  static TaskTargets from_batch(const Batch& batch, Task task);
};

/// Class probabilities (softmax) for classification, the raw scalar for regression.
Var predictions_from_logits(const Var& logits, Task task);

/// Cross-entropy over probabilities (log clipped at eps) or squared error,
/// restricted to rows with non-zero weight.
Var task_loss(const Var& predictions, const TaskTargets& targets, const Vector& row_weights,
              LossReduction reduction, double eps = 1e-12);

/// Maps the concatenated features [n x 3d] to three raw modality scores.
class Coordinator {
 public:
  Coordinator() = default;
  Coordinator(int d, Rng& rng) : mlp_(kNumModalities * d, d, kNumModalities, rng) {}

  Var raw_weights(const std::array<Var, kNumModalities>& features) const;
  void collect(nn::ParameterList& out, const std::string& prefix) const { mlp_.collect(out, prefix); }
  nn::Mlp& mlp() { return mlp_; }

 private:
  nn::Mlp mlp_;
};

struct CoordinatorOutput {
  Var omega;
  Var omega_bar;
};

CoordinatorOutput coordinator_weights(const Coordinator& coordinator,
                                      const std::array<Var, kNumModalities>& features);

/// F = [w_a * Z_a, w_t * Z_t, w_v * Z_v] row-wise for weights [n x 3].
Var weighted_concat(const std::array<Var, kNumModalities>& features, const Var& weights);
Var plain_concat(const std::array<Var, kNumModalities>& features);

/// Final classifier over F: 2-layer MLP, 3d -> d -> outputs.
class FusionClassifier {
 public:
  FusionClassifier() = default;
  FusionClassifier(int d, int outputs, Rng& rng) : mlp_(kNumModalities * d, d, outputs, rng) {}

  Var forward(const Var& fused) const { return mlp_.forward(fused); }
  void collect(nn::ParameterList& out, const std::string& prefix) const { mlp_.collect(out, prefix); }
  nn::Mlp& mlp() { return mlp_; }

 private:
  nn::Mlp mlp_;
};

struct FusionOutput {
  Var fused;   // F
  Var logits;  // classifier output before softmax
};

FusionOutput fuse_and_classify(const std::array<Var, kNumModalities>& features, const Var& omega_bar,
                               const FusionClassifier& classifier);

}  // namespace comp::fusion
