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

#include "comp/evaluation.hpp"

#include <fstream>

#include <spdlog/spdlog.h>

#include "comp/error.hpp"

namespace comp {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const Metrics& m) { return {{"acc", m.acc}, {"ua", m.ua}, {"f1", m.f1}}; }

Metrics metrics_from_json(const json& j) {
  return {j.at("acc").get<double>(), j.value("ua", 0.0), j.value("f1", 0.0)};
}

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels, int num_classes) {
  if (predictions.size() != labels.size()) throw ValidationError("compute_metrics: length mismatch");
  if (num_classes < 1) throw ValidationError("compute_metrics: num_classes must be >= 1");
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<std::vector<long>> confusion(k, std::vector<long>(k, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || predictions[i] < 0 || predictions[i] >= num_classes) {
      throw ValidationError("compute_metrics: class index out of range");
    }
    ++confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  }
  Metrics m;
  const auto total = static_cast<double>(labels.size());
  if (total == 0.0) return m;
  long correct = 0;
  double recall_sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    long support = 0;
    long predicted = 0;
    for (std::size_t j = 0; j < k; ++j) {
      support += confusion[c][j];
      predicted += confusion[j][c];
    }
    const long tp = confusion[c][c];
    correct += tp;
    if (support == 0) {
      spdlog::debug("compute_metrics: class {} absent from labels, excluded from UA", c);
      continue;
    }
    ++present;
    const double recall = static_cast<double>(tp) / static_cast<double>(support);
    const double precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    recall_sum += recall;
    const double f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    m.f1 += f1 * static_cast<double>(support) / total;
  }
  m.acc = static_cast<double>(correct) / total;
  m.ua = present > 0 ? recall_sum / present : 0.0;
  return m;
}

std::vector<int> binarize(std::span<const double> scores, BinarizeRule rule) {
  std::vector<int> out;
  out.reserve(scores.size());
  for (double s : scores) {
    out.push_back(rule == BinarizeRule::kNegativeVsNonNegative ? (s >= 0.0 ? 1 : 0) : (s > 0.0 ? 1 : 0));
  }
  return out;
}

namespace {

// Class index per real row of a batch from a prediction matrix.
void append_classes(const Matrix& predictions, int real_rows, Task task, BinarizeRule rule,
                    std::vector<int>& out) {
  for (int r = 0; r < real_rows; ++r) {
    if (task == Task::kClassification) {
      Eigen::Index arg = 0;
      predictions.row(r).maxCoeff(&arg);
      out.push_back(static_cast<int>(arg));
    } else {
      const double s = predictions(r, 0);
      out.push_back(binarize(std::span<const double>(&s, 1), rule)[0]);
    }
  }
}

std::vector<int> label_classes(const Dataset& dataset, std::span<const std::size_t> indices, BinarizeRule rule) {
  std::vector<int> out;
  for (std::size_t i : indices) {
    if (dataset.labels.task == Task::kClassification) {
      out.push_back(dataset.labels.classes[i]);
    } else {
      const double s = dataset.labels.scores(static_cast<Eigen::Index>(i));
      out.push_back(binarize(std::span<const double>(&s, 1), rule)[0]);
    }
  }
  return out;
}

int metric_classes(const Dataset& dataset) {
  return dataset.labels.task == Task::kClassification ? dataset.labels.num_classes : 2;
}

}  // namespace

EvalResult evaluate_stage1(const ComPModel& model, const Dataset& dataset, const MissingMask& mask,
                           std::span<const std::size_t> indices) {
  const auto rule = model.config().binarize_rule;
  const int batch_n = model.shape().batch_n;
  EvalResult result;
  result.labels = label_classes(dataset, indices, rule);
  std::array<std::vector<int>, kNumModalities> preds;
  std::vector<std::size_t> order(indices.begin(), indices.end());
  for (const auto& idx : chunk_indices(order, batch_n, nullptr)) {
    const Batch batch = assemble_batch(dataset, mask, idx, batch_n);
    const Stage1Forward fwd = model.forward_stage1(batch);
    for (int u = 0; u < kNumModalities; ++u) {
      append_classes(fwd.predictions[u].value(), batch.real_size(), model.shape().task, rule, preds[u]);
    }
  }
  for (int u = 0; u < kNumModalities; ++u) {
    result.modality[u] = compute_metrics(preds[u], result.labels, metric_classes(dataset));
  }
  return result;
}

EvalResult evaluate(ComPModel& model, const Dataset& dataset, const MissingMask& mask,
                    std::span<const std::size_t> indices, const Ablation& ablation) {
  const auto rule = model.config().binarize_rule;
  const int batch_n = model.shape().batch_n;
  EvalResult result;
  result.labels = label_classes(dataset, indices, rule);
  std::array<std::vector<int>, kNumModalities> preds;
  std::array<double, kNumModalities> weight_sum{0.0, 0.0, 0.0};
  long rows = 0;
  std::vector<std::size_t> order(indices.begin(), indices.end());
  for (const auto& idx : chunk_indices(order, batch_n, nullptr)) {
    const Batch batch = assemble_batch(dataset, mask, idx, batch_n);
    const Stage2Forward fwd = model.forward(batch, ablation, nullptr);
    const int real = batch.real_size();
    append_classes(fwd.fused_predictions.value(), real, model.shape().task, rule, result.fused_predictions);
    for (int u = 0; u < kNumModalities; ++u) {
      append_classes(fwd.modality_predictions[u].value(), real, model.shape().task, rule, preds[u]);
      if (ablation.cr) weight_sum[u] += fwd.omega_bar.value().col(u).head(real).sum();
    }
    rows += real;
  }
  const int k = metric_classes(dataset);
  result.fused = compute_metrics(result.fused_predictions, result.labels, k);
  for (int u = 0; u < kNumModalities; ++u) {
    result.modality[u] = compute_metrics(preds[u], result.labels, k);
    if (ablation.cr && rows > 0) result.coordinator_weight_means[u] = weight_sum[u] / static_cast<double>(rows);
  }
  return result;
}

EmbeddingKind parse_embedding_kind(std::string_view name) {
  if (name == "Z" || name == "z") return EmbeddingKind::kZ;
  if (name == "Z_bar" || name == "z_bar" || name == "zbar") return EmbeddingKind::kZBar;
  if (name == "F" || name == "f") return EmbeddingKind::kF;
  throw ValidationError("unknown embedding '" + std::string(name) + "' (expected Z, Z_bar or F)");
}

json export_embeddings(ComPModel& model, const Dataset& dataset, const MissingMask& mask,
                       std::span<const std::size_t> indices, EmbeddingKind which, const Ablation& ablation,
                       const fs::path& dir) {
  const int batch_n = model.shape().batch_n;
  const auto n = static_cast<Eigen::Index>(indices.size());
  const int d = model.config().d;
  std::vector<Matrix> mats;
  if (which == EmbeddingKind::kF) {
    mats.emplace_back(n, kNumModalities * d);
  } else {
    for (int u = 0; u < kNumModalities; ++u) mats.emplace_back(n, d);
  }
  Eigen::Index at = 0;
  std::vector<std::size_t> order(indices.begin(), indices.end());
  for (const auto& idx : chunk_indices(order, batch_n, nullptr)) {
    const Batch batch = assemble_batch(dataset, mask, idx, batch_n);
    const Stage2Forward fwd = model.forward(batch, ablation, nullptr);
    const Eigen::Index real = batch.real_size();
    if (which == EmbeddingKind::kF) {
      mats[0].middleRows(at, real) = fwd.fused.value().topRows(real);
    } else {
      for (int u = 0; u < kNumModalities; ++u) {
        const auto& src = which == EmbeddingKind::kZ ? fwd.z[u] : fwd.z_bar[u];
        mats[static_cast<std::size_t>(u)].middleRows(at, real) = src.value().topRows(real);
      }
    }
    at += real;
  }

  fs::create_directories(dir);
  const char* tag = which == EmbeddingKind::kZ ? "Z" : (which == EmbeddingKind::kZBar ? "Z_bar" : "F");
  json manifest;
  manifest["name"] = dataset.name + "/" + tag;
  manifest["n_samples"] = n;
  manifest["task"] = std::string(task_name(dataset.labels.task));
  if (dataset.labels.task == Task::kClassification) manifest["num_classes"] = dataset.labels.num_classes;
  manifest["embedding"] = tag;
  manifest["modalities"] = json::array();
  for (std::size_t k = 0; k < mats.size(); ++k) {
    const std::string name = which == EmbeddingKind::kF ? std::string("F")
                                                        : std::string(modality_name(kModalities[k]));
    const std::string file = name + ".f32";
    write_f32le_matrix(dir / file, mats[k]);
    manifest["modalities"].push_back(
        {{"name", name}, {"dim", mats[k].cols()}, {"dtype", "f32le"}, {"file", file}});
  }
  manifest["labels_file"] = "labels.txt";
  manifest["mask_file"] = "mask.txt";
  std::ofstream labels(dir / "labels.txt");
  std::ofstream flags(dir / "mask.txt");
  for (std::size_t i : indices) {
    if (dataset.labels.task == Task::kClassification) {
      labels << dataset.labels.classes[i] << '\n';
    } else {
      labels << dataset.labels.scores(static_cast<Eigen::Index>(i)) << '\n';
    }
    for (int u = 0; u < kNumModalities; ++u) flags << (mask.gamma_all(static_cast<Eigen::Index>(i), u) ? '1' : '0');
    flags << '\n';
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  return manifest;
}

}  // namespace comp
