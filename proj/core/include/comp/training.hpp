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
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "comp/config.hpp"
#include "comp/model.hpp"

namespace comp {

/// One line of the JSON-lines training log.
struct EpochLog {
  int epoch = 0;
  std::string stage;
  double loss = 0.0;
  std::array<double, kNumModalities> modality_acc{};
  std::optional<double> fused_acc;
  double wall_time = 0.0;
};

nlohmann::json to_json(const EpochLog& e);
EpochLog epoch_log_from_json(const nlohmann::json& j);

using LogSink = std::function<void(const EpochLog&)>;
/// Sees the pipeline trace of every stage-2 training batch.
using TraceSink = std::function<void(const propagation::PipelineTrace&)>;

struct StepDiagnostics {
  double loss = 0.0;
  bool modulated = false;
  std::array<Vector, kNumModalities> errors;
  std::array<Vector, kNumModalities> weights;
};

/// Drives both training stages over one dataset, mask and split. All
/// randomness (shuffling, dropout) comes from streams of `root`.
class Trainer {
 public:
  Trainer(ComPModel& model, const Dataset& dataset, const MissingMask& mask, const Split& split,
          const TrainConfig& config, const Rng& root);

  /// Reconstruction + classification objective on zero-imputed data. Logs test-split modality accuracy.
  std::vector<EpochLog> train_stage1(const LogSink& sink = {});
  /// Full pipeline with fused + auxiliary modality losses and modulation.
  std::vector<EpochLog> train_stage2(const LogSink& sink = {});

  double stage1_step(nn::Optimizer& optimizer, const Batch& batch);
  double stage2_step(nn::Optimizer& optimizer, const Batch& batch, StepDiagnostics* diagnostics = nullptr);

  /// Whether gradient modulation runs under the configured ablation.
  bool modulation_active() const;

  void set_trace_sink(TraceSink sink) { trace_sink_ = std::move(sink); }

 private:
  ComPModel& model_;
  const Dataset& dataset_;
  const MissingMask& mask_;
  const Split& split_;
  TrainConfig config_;
  Rng shuffle1_;
  Rng shuffle2_;
  Rng dropout_;
  TraceSink trace_sink_;
};

}  // namespace comp
