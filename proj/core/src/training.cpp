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

#include "comp/training.hpp"

#include <chrono>
#include <cmath>

#include <spdlog/spdlog.h>

#include "comp/error.hpp"
#include "comp/evaluation.hpp"

namespace comp {

using nlohmann::json;

json to_json(const EpochLog& e) {
  json j = {{"epoch", e.epoch},
            {"stage", e.stage},
            {"loss", e.loss},
            {"acc", {{"a", e.modality_acc[0]}, {"t", e.modality_acc[1]}, {"v", e.modality_acc[2]}}},
            {"wall_time", e.wall_time}};
  j["fused_acc"] = e.fused_acc ? json(*e.fused_acc) : json(nullptr);
  return j;
}

EpochLog epoch_log_from_json(const json& j) {
  EpochLog e;
  e.epoch = j.at("epoch").get<int>();
  e.stage = j.at("stage").get<std::string>();
  e.loss = j.at("loss").get<double>();
  e.modality_acc = {j.at("acc").at("a").get<double>(), j.at("acc").at("t").get<double>(),
                    j.at("acc").at("v").get<double>()};
  if (j.contains("fused_acc") && !j["fused_acc"].is_null()) e.fused_acc = j["fused_acc"].get<double>();
  e.wall_time = j.value("wall_time", 0.0);
  return e;
}

Trainer::Trainer(ComPModel& model, const Dataset& dataset, const MissingMask& mask, const Split& split,
                 const TrainConfig& config, const Rng& root)
    : model_(model),
      dataset_(dataset),
      mask_(mask),
      split_(split),
      config_(config),
      shuffle1_(root.derive("stage1/shuffle")),
      shuffle2_(root.derive("stage2/shuffle")),
      dropout_(root.derive("stage2/dropout")) {
  config_.validate();
  if (model.shape().batch_n != config.batch_n) {
    throw ValidationError("model was built for batch_n=" + std::to_string(model.shape().batch_n) +
                          " but training uses " + std::to_string(config.batch_n));
  }
}

bool Trainer::modulation_active() const {
  return config_.ablation.gm && config_.ablation.pg && config_.ablation.kp;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void check_finite(double loss, const char* stage, int epoch) {
  if (!std::isfinite(loss)) {
    throw RuntimeFailure(std::string(stage) + " diverged at epoch " + std::to_string(epoch) +
                         " (non-finite loss)");
  }
}

}  // namespace

double Trainer::stage1_step(nn::Optimizer& optimizer, const Batch& batch) {
  optimizer.zero_grad();
  Stage1Forward fwd = model_.forward_stage1(batch);
  std::array<encoders::Stage1Terms, kNumModalities> terms;
  for (int u = 0; u < kNumModalities; ++u) {
    terms[u] = {fwd.reconstruction[u], batch.x_hat[u], batch.gamma[u].cwiseProduct(batch.valid),
                fwd.predictions[u]};
  }
  auto loss = encoders::stage1_loss(terms, fusion::TaskTargets::from_batch(batch, model_.shape().task),
                                    model_.config().loss_reduction);
  ag::backward(loss.total);
  optimizer.step();
  return loss.total.value()(0, 0);
}

std::vector<EpochLog> Trainer::train_stage1(const LogSink& sink) {
  std::vector<EpochLog> logs;
  if (config_.epochs_stage1 == 0) return logs;
  nn::Optimizer optimizer(model_.stage1_parameters(), config_.optimizer, config_.lr_stage1);
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= config_.epochs_stage1; ++epoch) {
    double total = 0.0;
    int batches = 0;
    for (const auto& idx : chunk_indices(split_.train, config_.batch_n, &shuffle1_)) {
      const Batch batch = assemble_batch(dataset_, mask_, idx, config_.batch_n);
      total += stage1_step(optimizer, batch);
      ++batches;
    }
    const double loss = total / std::max(1, batches);
    check_finite(loss, "stage 1", epoch);
    const EvalResult eval = evaluate_stage1(model_, dataset_, mask_, split_.test);
    EpochLog entry{epoch, "1", loss, {}, std::nullopt, seconds_since(start)};
    for (int u = 0; u < kNumModalities; ++u) entry.modality_acc[u] = eval.modality[u].acc;
    logs.push_back(entry);
    if (sink) sink(entry);
  }
  return logs;
}

double Trainer::stage2_step(nn::Optimizer& optimizer, const Batch& batch, StepDiagnostics* diagnostics) {
  optimizer.zero_grad();
  const Ablation& ablation = config_.ablation;
  propagation::PipelineTrace trace;
  Stage2Forward fwd = model_.forward(batch, ablation, &dropout_, trace_sink_ ? &trace : nullptr);
  if (trace_sink_) trace_sink_(trace);
  const auto targets = fusion::TaskTargets::from_batch(batch, model_.shape().task);
  const LossReduction reduction = model_.config().loss_reduction;

  ag::Var total = fusion::task_loss(fwd.fused_predictions, targets, batch.valid, reduction);
  if (config_.aux_task_weight > 0.0) {
    for (int u = 0; u < kNumModalities; ++u) {
      ag::Var aux = fusion::task_loss(fwd.modality_predictions[u], targets, batch.valid, reduction);
      total = ag::add(total, ag::scale(aux, config_.aux_task_weight));
      if (model_.config().separate_error_head) {
        ag::Var err = fusion::task_loss(fwd.error_head_predictions[u], targets, batch.valid, reduction);
        total = ag::add(total, ag::scale(err, config_.aux_task_weight));
      }
    }
  }
  ag::backward(total);

  if (modulation_active()) {
    // Errors over the real rows only; padded rows keep the neutral weight.
    const int real = batch.real_size();
    std::array<Vector, kNumModalities> errors;
    std::array<Vector, kNumModalities> weights;
    for (int u = 0; u < kNumModalities; ++u) {
      const ag::Var& head = model_.config().separate_error_head ? fwd.error_head_predictions[u]
                                                                : fwd.modality_predictions[u];
      errors[u] = prompting::logit_error(head.value(), targets).head(real);
      weights[u] = Vector::Ones(batch.size());
    }
    if (real >= 2 && !config_.force_unit_modulation) {
      const auto w = prompting::modulation_weights(errors, model_.config().eps, model_.config().w_min,
                                                   model_.config().w_max);
      for (int u = 0; u < kNumModalities; ++u) weights[u].head(real) = w[static_cast<std::size_t>(u)];
    }
    auto compression = model_.compression_weights();
    for (int u = 0; u < kNumModalities; ++u) {
      if (compression[u].grad().size() != 0) {
        prompting::apply_gradient_modulation(compression[u].mutable_grad(), weights[u]);
      }
    }
    if (diagnostics != nullptr) {
      diagnostics->modulated = true;
      diagnostics->errors = errors;
      diagnostics->weights = weights;
    }
  }
  optimizer.step();
  const double loss = total.value()(0, 0);
  if (diagnostics != nullptr) diagnostics->loss = loss;
  return loss;
}

std::vector<EpochLog> Trainer::train_stage2(const LogSink& sink) {
  std::vector<EpochLog> logs;
  const Ablation& ablation = config_.ablation;
  if (ablation.pg && !ablation.kp) {
    spdlog::warn("pg is on but kp is off: generated prompts are routed nowhere");
  }
  if (ablation.gm && !modulation_active()) {
    spdlog::warn("gm is on but there is no prototype compression to modulate (needs kp and pg)");
  }
  if (config_.epochs_stage2 == 0) return logs;
  nn::Optimizer optimizer(model_.stage2_parameters(config_.freeze_encoders), config_.optimizer,
                          config_.lr_stage2);
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= config_.epochs_stage2; ++epoch) {
    double total = 0.0;
    int batches = 0;
    for (const auto& idx : chunk_indices(split_.train, config_.batch_n, &shuffle2_)) {
      const Batch batch = assemble_batch(dataset_, mask_, idx, config_.batch_n);
      total += stage2_step(optimizer, batch);
      ++batches;
    }
    const double loss = total / std::max(1, batches);
    check_finite(loss, "stage 2", epoch);
    const EvalResult eval = evaluate(model_, dataset_, mask_, split_.test, ablation);
    EpochLog entry{epoch, "2", loss, {}, eval.fused ? std::optional<double>(eval.fused->acc) : std::nullopt,
                   seconds_since(start)};
    for (int u = 0; u < kNumModalities; ++u) entry.modality_acc[u] = eval.modality[u].acc;
    logs.push_back(entry);
    if (sink) sink(entry);
  }
  return logs;
}

}  // namespace comp
