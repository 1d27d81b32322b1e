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

#include "comp/config.hpp"

#include <cmath>
#include <sstream>

#include "comp/error.hpp"

namespace comp {

using nlohmann::json;

void ModelConfig::validate() const {
  if (d < 1 || p < 0 || c < 1 || L < 0 || m_msa < 0 || heads < 1) {
    throw ValidationError("model config: dimensions must be positive");
  }
  if (d % heads != 0) throw ValidationError("model config: d must be divisible by heads");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("model config: lambda must be in [0, 1]");
  if (!(dropout_pg >= 0.0 && dropout_pg < 1.0)) throw ValidationError("model config: dropout_pg in [0, 1)");
  if (!(w_min <= w_max)) throw ValidationError("model config: w_min > w_max");
  if (!(eps > 0.0) || !(cos_eps > 0.0)) throw ValidationError("model config: eps must be positive");
}

Ablation Ablation::from_bits(const std::string& bits) {
  if (bits.size() != 4 || bits.find_first_not_of("01") != std::string::npos) {
    throw ValidationError("ablation row must be 4 binary digits (kp,pg,cr,gm), got '" + bits + "'");
  }
  return {bits[0] == '1', bits[1] == '1', bits[2] == '1', bits[3] == '1'};
}

std::string Ablation::bits() const {
  return std::string{kp ? '1' : '0', pg ? '1' : '0', cr ? '1' : '0', gm ? '1' : '0'};
}

void TrainConfig::validate() const {
  if (batch_n < 2) throw ValidationError("train config: batch_n must be >= 2");
  if (epochs_stage1 < 0 || epochs_stage2 < 0) throw ValidationError("train config: epochs must be >= 0");
  if (!(lr_stage1 > 0.0) || !(lr_stage2 > 0.0)) throw ValidationError("train config: lr must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("train config: test_fraction in (0, 1)");
  if (aux_task_weight < 0.0) throw ValidationError("train config: aux_task_weight must be >= 0");
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  if (!(mr >= 0.0 && mr <= 1.0)) throw ValidationError("mr must be in [0, 1]");
}

json to_json(const ModelConfig& c) {
  return {{"d", c.d},
          {"p", c.p},
          {"c", c.c},
          {"L", c.L},
          {"m_msa", c.m_msa},
          {"heads", c.heads},
          {"lambda", c.lambda},
          {"mask_neg", c.mask_neg},
          {"eps", c.eps},
          {"cos_eps", c.cos_eps},
          {"w_min", c.w_min},
          {"w_max", c.w_max},
          {"dropout_pg", c.dropout_pg},
          {"loss_reduction", c.loss_reduction == LossReduction::kMean ? "mean" : "sum"},
          {"binarize_rule", c.binarize_rule == BinarizeRule::kNegativeVsNonNegative ? "negative_vs_nonnegative"
                                                                                    : "negative_vs_positive"},
          {"separate_error_head", c.separate_error_head}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs_stage1", c.epochs_stage1},
          {"epochs_stage2", c.epochs_stage2},
          {"batch_n", c.batch_n},
          {"lr_stage1", c.lr_stage1},
          {"lr_stage2", c.lr_stage2},
          {"optimizer", c.optimizer == nn::OptimizerKind::kAdam ? "adam" : "sgd"},
          {"seed", c.seed},
          {"freeze_encoders", c.freeze_encoders},
          {"aux_task_weight", c.aux_task_weight},
          {"test_fraction", c.test_fraction},
          {"kp", c.ablation.kp},
          {"pg", c.ablation.pg},
          {"cr", c.ablation.cr},
          {"gm", c.ablation.gm},
          {"force_unit_modulation", c.force_unit_modulation}};
}

json to_json(const SyntheticSpec& s) {
  json mods = json::array();
  for (const auto& m : s.modalities) {
    mods.push_back({{"name", std::string(modality_name(m.modality))},
                    {"dim", m.dim},
                    {"snr", std::isinf(m.snr) ? json("inf") : json(m.snr)}});
  }
  return {{"name", s.name},
          {"n_samples", s.n_samples},
          {"num_classes", s.num_classes},
          {"latent_dim", s.latent_dim},
          {"class_sep", s.class_sep},
          {"task", std::string(task_name(s.task))},
          {"modalities", mods},
          {"seed", s.seed}};
}

json to_json(const ExperimentConfig& c) {
  return {{"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"mr", c.mr},
          {"data", {{"dir", c.data_dir}, {"synthetic", to_json(c.synthetic)}}}};
}

namespace {

// Reads known keys only; unknown keys are rejected so typos surface.
template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* section) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ValidationError(std::string("unknown ") + section + " key '" + key + "'");
  }
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j, {"d", "p", "c", "L", "m_msa", "heads", "lambda", "mask_neg", "eps", "cos_eps", "w_min",
                     "w_max", "dropout_pg", "loss_reduction", "binarize_rule", "separate_error_head"},
                 "model");
  ModelConfig c;
  read(j, "d", c.d);
  read(j, "p", c.p);
  read(j, "c", c.c);
  read(j, "L", c.L);
  read(j, "m_msa", c.m_msa);
  read(j, "heads", c.heads);
  read(j, "lambda", c.lambda);
  read(j, "mask_neg", c.mask_neg);
  read(j, "eps", c.eps);
  read(j, "cos_eps", c.cos_eps);
  read(j, "w_min", c.w_min);
  read(j, "w_max", c.w_max);
  read(j, "dropout_pg", c.dropout_pg);
  read(j, "separate_error_head", c.separate_error_head);
  if (j.contains("loss_reduction")) {
    const auto v = j["loss_reduction"].get<std::string>();
    if (v != "mean" && v != "sum") throw ValidationError("loss_reduction must be mean or sum");
    c.loss_reduction = v == "mean" ? LossReduction::kMean : LossReduction::kSum;
  }
  if (j.contains("binarize_rule")) {
    const auto v = j["binarize_rule"].get<std::string>();
    if (v == "negative_vs_nonnegative") {
      c.binarize_rule = BinarizeRule::kNegativeVsNonNegative;
    } else if (v == "negative_vs_positive") {
      c.binarize_rule = BinarizeRule::kNegativeVsPositiveStrict;
    } else {
      throw ValidationError("unknown binarize_rule '" + v + "'");
    }
  }
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j, {"epochs_stage1", "epochs_stage2", "batch_n", "lr_stage1", "lr_stage2", "optimizer", "seed",
                     "freeze_encoders", "aux_task_weight", "test_fraction", "kp", "pg", "cr", "gm",
                     "force_unit_modulation"},
                 "train");
  TrainConfig c;
  read(j, "epochs_stage1", c.epochs_stage1);
  read(j, "epochs_stage2", c.epochs_stage2);
  read(j, "batch_n", c.batch_n);
  read(j, "lr_stage1", c.lr_stage1);
  read(j, "lr_stage2", c.lr_stage2);
  read(j, "seed", c.seed);
  read(j, "freeze_encoders", c.freeze_encoders);
  read(j, "aux_task_weight", c.aux_task_weight);
  read(j, "test_fraction", c.test_fraction);
  read(j, "kp", c.ablation.kp);
  read(j, "pg", c.ablation.pg);
  read(j, "cr", c.ablation.cr);
  read(j, "gm", c.ablation.gm);
  read(j, "force_unit_modulation", c.force_unit_modulation);
  if (j.contains("optimizer")) {
    const auto v = j["optimizer"].get<std::string>();
    if (v == "adam" || v == "adaptive-moment") {
      c.optimizer = nn::OptimizerKind::kAdam;
    } else if (v == "sgd") {
      c.optimizer = nn::OptimizerKind::kSgd;
    } else {
      throw ValidationError("unknown optimizer '" + v + "'");
    }
  }
  c.validate();
  return c;
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  reject_unknown(j, {"name", "n_samples", "num_classes", "latent_dim", "class_sep", "task", "modalities", "seed"},
                 "synthetic");
  SyntheticSpec s;
  read(j, "name", s.name);
  read(j, "n_samples", s.n_samples);
  read(j, "num_classes", s.num_classes);
  read(j, "latent_dim", s.latent_dim);
  read(j, "class_sep", s.class_sep);
  read(j, "seed", s.seed);
  if (j.contains("task")) s.task = parse_task(j["task"].get<std::string>());
  if (j.contains("modalities")) {
    s.modalities.clear();
    for (const auto& m : j["modalities"]) {
      double snr = 0.0;
      if (m.at("snr").is_string()) {
        if (m["snr"].get<std::string>() != "inf") throw ValidationError("snr must be a number or \"inf\"");
        snr = std::numeric_limits<double>::infinity();
      } else {
        snr = m["snr"].get<double>();
      }
      s.modalities.push_back({parse_modality(m.at("name").get<std::string>()), m.at("dim").get<int>(), snr});
    }
  }
  return s;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  reject_unknown(j, {"model", "train", "mr", "data"}, "top-level");
  ExperimentConfig c;
  try {
    if (j.contains("model")) c.model = model_config_from_json(j["model"]);
    if (j.contains("train")) c.train = train_config_from_json(j["train"]);
    read(j, "mr", c.mr);
    if (j.contains("data")) {
      const auto& d = j["data"];
      reject_unknown(d, {"dir", "synthetic"}, "data");
      read(d, "dir", c.data_dir);
      if (d.contains("synthetic")) c.synthetic = synthetic_spec_from_json(d["synthetic"]);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config type error: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_overrides(json& config, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + item + "' is not key=value");
    const std::string path = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &config;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
      if (!node->is_object()) throw ValidationError("override path '" + path + "' crosses a non-object");
      node = &(*node)[parts[k]];
      if (node->is_null()) *node = json::object();
    }
    (*node)[parts.back()] = value;
  }
}

std::vector<std::pair<Modality, double>> parse_modality_values(const std::string& text) {
  std::vector<std::pair<Modality, double>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("expected modality=value, got '" + item + "'");
    const Modality m = parse_modality(item.substr(0, eq));
    const std::string v = item.substr(eq + 1);
    double value = 0.0;
    if (v == "inf") {
      value = std::numeric_limits<double>::infinity();
    } else {
      try {
        value = std::stod(v);
      } catch (const std::exception&) {
        throw ValidationError("bad number '" + v + "' for modality " + item.substr(0, eq));
      }
    }
    out.emplace_back(m, value);
  }
  return out;
}

}  // namespace comp
