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

#include "comp/fusion.hpp"

#include "comp/error.hpp"

namespace comp::fusion {

TaskTargets TaskTargets::from_batch(const Batch& batch, Task task) {
  return {task, batch.classes, batch.scores};
}

Var predictions_from_logits(const Var& logits, Task task) {
  return task == Task::kClassification ? ag::softmax_rows(logits) : logits;
}

Var task_loss(const Var& predictions, const TaskTargets& targets, const Vector& row_weights,
              LossReduction reduction, double eps) {
  const bool mean = reduction == LossReduction::kMean;
  if (targets.task == Task::kClassification) {
    return ag::nll_from_probs(predictions, targets.classes, row_weights, mean, eps);
  }
  return ag::squared_error(predictions, targets.scores, row_weights, mean);
}

Var Coordinator::raw_weights(const std::array<Var, kNumModalities>& features) const {
  return mlp_.forward(plain_concat(features));
}

CoordinatorOutput coordinator_weights(const Coordinator& coordinator,
                                      const std::array<Var, kNumModalities>& features) {
  const auto n = features[0].rows();
  const auto d = features[0].cols();
  for (const auto& f : features) {
    if (f.rows() != n || f.cols() != d) throw ValidationError("coordinator: feature shapes differ");
  }
  Var omega = coordinator.raw_weights(features);
  return {omega, ag::softmax_rows(omega)};
}

Var weighted_concat(const std::array<Var, kNumModalities>& features, const Var& weights) {
  if (weights.cols() != kNumModalities || weights.rows() != features[0].rows()) {
    throw ValidationError("weighted_concat: weights must be [n x 3]");
  }
  std::array<Var, kNumModalities> scaled;
  for (int u = 0; u < kNumModalities; ++u) {
    scaled[u] = ag::scale_rows(features[u], ag::slice_cols(weights, u, 1));
  }
  return ag::concat_cols(scaled);
}

Var plain_concat(const std::array<Var, kNumModalities>& features) {
  return ag::concat_cols(features);
}

FusionOutput fuse_and_classify(const std::array<Var, kNumModalities>& features, const Var& omega_bar,
                               const FusionClassifier& classifier) {
  Var fused = omega_bar.defined() ? weighted_concat(features, omega_bar) : plain_concat(features);
  return {fused, classifier.forward(fused)};
}

}  // namespace comp::fusion
