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
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "comp/model.hpp"

namespace comp {

/// ACC: fraction correct. UA: mean recall over classes present in the
/// labels. F1: support-weighted mean of per-class F1.
struct Metrics {
  double acc = 0.0;
  double ua = 0.0;
  double f1 = 0.0;
};

nlohmann::json to_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::json& j);

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels, int num_classes);

std::vector<int> binarize(std::span<const double> scores, BinarizeRule rule);

struct EvalResult {
  std::optional<Metrics> fused;
  std::array<Metrics, kNumModalities> modality{};
  /// Mean coordinator weights over evaluated rows; (1, 1, 1) without Cr.
  std::array<double, kNumModalities> coordinator_weight_means{1.0, 1.0, 1.0};
  std::vector<int> fused_predictions;
  std::vector<int> labels;
};

/// Stage-1 modality heads on Z over `indices` (sequential, padded batches).
EvalResult evaluate_stage1(const ComPModel& model, const Dataset& dataset, const MissingMask& mask,
                           std::span<const std::size_t> indices);

/// Full stage-2 forward with dropout disabled.
EvalResult evaluate(ComPModel& model, const Dataset& dataset, const MissingMask& mask,
                    std::span<const std::size_t> indices, const Ablation& ablation);

enum class EmbeddingKind { kZ, kZBar, kF };
EmbeddingKind parse_embedding_kind(std::string_view name);

/// Writes the requested embeddings in the dataset directory format: one f32le
/// matrix per modality (Z, Z_bar) or a single fused matrix (F), the labels,
/// and a mask file flagging missing instances per modality.
nlohmann::json export_embeddings(ComPModel& model, const Dataset& dataset, const MissingMask& mask,
                                 std::span<const std::size_t> indices, EmbeddingKind which,
                                 const Ablation& ablation, const std::filesystem::path& dir);

}  // namespace comp
