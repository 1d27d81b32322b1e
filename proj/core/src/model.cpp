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

#include "comp/model.hpp"

#include "comp/error.hpp"

namespace comp {

nlohmann::json to_json(const ModelShape& s) {
  return {{"input_dims", s.input_dims},
          {"task", std::string(task_name(s.task))},
          {"num_classes", s.num_classes},
          {"batch_n", s.batch_n}};
}

ModelShape model_shape_from_json(const nlohmann::json& j) {
  ModelShape s;
  s.input_dims = j.at("input_dims").get<std::array<int, kNumModalities>>();
  s.task = parse_task(j.at("task").get<std::string>());
  s.num_classes = j.at("num_classes").get<int>();
  s.batch_n = j.at("batch_n").get<int>();
  return s;
}

ModelShape shape_for(const Dataset& dataset, int batch_n) {
  if (static_cast<int>(dataset.modalities.size()) != kNumModalities) {
    throw ValidationError("model expects exactly three modalities (a, t, v)");
  }
  ModelShape s;
  for (int u = 0; u < kNumModalities; ++u) {
    const auto& mb = dataset.modalities[static_cast<std::size_t>(u)];
    if (mb.modality != kModalities[static_cast<std::size_t>(u)]) {
      throw ValidationError("dataset modalities must be in canonical order a, t, v");
    }
    s.input_dims[u] = static_cast<int>(mb.x.cols());
  }
  s.task = dataset.labels.task;
  s.num_classes = dataset.labels.task == Task::kClassification ? dataset.labels.num_classes : 1;
  s.batch_n = batch_n;
  return s;
}

ComPModel::ComPModel(const ModelConfig& config, const ModelShape& shape, Rng init_rng)
    : config_(config), shape_(shape) {
  config_.validate();
  if (shape.batch_n < 2) throw ValidationError("batch_n must be >= 2");
  const int d = config_.d;
  const int outputs = shape.outputs();
  for (int u = 0; u < kNumModalities; ++u) {
    const Modality m = kModalities[static_cast<std::size_t>(u)];
    Rng rng = init_rng.derive("encoder/" + std::string(modality_name(m)));
    encoders_[u] = encoders::ModalityEncoderStack(m, shape.input_dims[u], d, outputs, rng);
    Rng proto_rng = init_rng.derive("proto/" + std::string(modality_name(m)));
    banks_[u] = prompting::PrototypeBank(m, shape.batch_n, config_.c, config_.dropout_pg, proto_rng);
    Rng err_rng = init_rng.derive("error_head/" + std::string(modality_name(m)));
    error_heads_[u] = nn::Linear(d, outputs, err_rng);
  }
  for (int l = 0; l < config_.L; ++l) {
    propagation::BlockWeights bw;
    for (int u = 0; u < kNumModalities; ++u) {
      Rng rng = init_rng.derive("block" + std::to_string(l) + "/" + std::string(modality_name(kModalities[u])));
      bw.generators[u] = prompting::PromptGenerator(d, config_.p, rng);
      bw.kp[u] = propagation::KPBlock(d, config_.p, config_.m_msa, config_.heads, rng);
    }
    blocks_.push_back(std::move(bw));
  }
  Rng coord_rng = init_rng.derive("coordinator");
  coordinator_ = fusion::Coordinator(d, coord_rng);
  Rng cls_rng = init_rng.derive("classifier");
  classifier_ = fusion::FusionClassifier(d, outputs, cls_rng);
}

Stage1Forward ComPModel::forward_stage1(const Batch& batch) const {
  Stage1Forward out;
  for (int u = 0; u < kNumModalities; ++u) {
    out.z[u] = encoders::encode(batch.x_hat[u], encoders_[u]);
    out.reconstruction[u] = encoders_[u].decode(out.z[u]);
    out.predictions[u] = fusion::predictions_from_logits(encoders_[u].classify(out.z[u]), shape_.task);
  }
  return out;
}

Stage2Forward ComPModel::forward(const Batch& batch, const Ablation& ablation, Rng* dropout_rng,
                                 propagation::PipelineTrace* trace) {
  Stage2Forward out;
  for (int u = 0; u < kNumModalities; ++u) out.z[u] = encoders::encode(batch.x_hat[u], encoders_[u]);

  if (ablation.kp && ablation.pg) {
    for (int u = 0; u < kNumModalities; ++u) banks_[u].learn(out.z[u], dropout_rng);
  }
  try {
    out.z_bar = propagation::run_pipeline(out.z, batch.gamma, banks_, blocks_, config_, ablation, trace);
  } catch (...) {
    for (auto& b : banks_) b.release();
    throw;
  }
  for (auto& b : banks_) b.release();

  for (int u = 0; u < kNumModalities; ++u) {
    out.modality_predictions[u] =
        fusion::predictions_from_logits(encoders_[u].classify(out.z_bar[u]), shape_.task);
    if (config_.separate_error_head) {
      out.error_head_predictions[u] =
          fusion::predictions_from_logits(error_heads_[u].forward(out.z_bar[u]), shape_.task);
    }
  }
  if (ablation.cr) {
    auto cw = fusion::coordinator_weights(coordinator_, out.z_bar);
    out.omega = cw.omega;
    out.omega_bar = cw.omega_bar;
  }
  auto fo = fusion::fuse_and_classify(out.z_bar, out.omega_bar, classifier_);
  out.fused = fo.fused;
  out.fused_predictions = fusion::predictions_from_logits(fo.logits, shape_.task);
  return out;
}

nn::ParameterList ComPModel::parameters() const {
  nn::ParameterList out;
  for (const auto& e : encoders_) e.collect(out);
  for (const auto& b : banks_) b.collect(out);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    for (int u = 0; u < kNumModalities; ++u) {
      const std::string prefix = std::string(modality_name(kModalities[u])) + "/block" + std::to_string(l);
      blocks_[l].generators[u].collect(out, prefix + "/pg");
      blocks_[l].kp[u].collect(out, prefix + "/kp");
    }
  }
  for (int u = 0; u < kNumModalities; ++u) {
    error_heads_[u].collect(out, std::string(modality_name(kModalities[u])) + "/error_head");
  }
  coordinator_.collect(out, "fusion/coordinator");
  classifier_.collect(out, "fusion/classifier");
  return out;
}

nn::ParameterList ComPModel::stage1_parameters() const {
  nn::ParameterList out;
  for (const auto& e : encoders_) e.collect(out);
  return out;
}

nn::ParameterList ComPModel::stage2_parameters(bool freeze_encoders) const {
  nn::ParameterList all = parameters();
  nn::ParameterList out;
  for (auto& p : all) {
    const bool is_encoder = p.name.find("/enc/") != std::string::npos;
    const bool is_decoder = p.name.find("/dec/") != std::string::npos;
    const bool is_error_head = p.name.find("/error_head/") != std::string::npos;
    if (is_decoder) continue;
    if (is_encoder && freeze_encoders) continue;
    if (is_error_head && !config_.separate_error_head) continue;
    out.push_back(std::move(p));
  }
  return out;
}

std::array<ag::Var, kNumModalities> ComPModel::compression_weights() const {
  std::array<ag::Var, kNumModalities> out;
  for (int u = 0; u < kNumModalities; ++u) out[u] = banks_[u].compression().weight();
  return out;
}

}  // namespace comp
