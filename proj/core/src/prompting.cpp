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

#include "comp/prompting.hpp"

#include <algorithm>
#include <cmath>

#include "comp/error.hpp"

namespace comp::prompting {

PrototypeBank::PrototypeBank(Modality modality, int batch_n, int c, double dropout, Rng& rng)
    : modality_(modality), compression_(batch_n, c, rng), mixing_(c, c, rng), dropout_(dropout) {}

const Var& PrototypeBank::learn(const Var& z, Rng* dropout_rng) {
  if (z.rows() != batch_n()) {
    throw ValidationError("learn_prototypes: batch has " + std::to_string(z.rows()) +
                          " rows, compression layer expects " + std::to_string(batch_n()) +
                          " (pad partial batches)");
  }
  // [d x n] -> [d x c] -> [d x c], then back to [c x d].
  Var h = nn::activate(compression_.forward(ag::transpose(z)), act_);
  h = mixing_.forward(h);
  if (dropout_ > 0.0 && dropout_rng != nullptr) {
    Matrix keep(h.rows(), h.cols());
    const double scale = 1.0 / (1.0 - dropout_);
    for (Eigen::Index i = 0; i < keep.rows(); ++i) {
      for (Eigen::Index j = 0; j < keep.cols(); ++j) {
        keep(i, j) = dropout_rng->bernoulli(dropout_) ? 0.0 : scale;
      }
    }
    h = ag::mul_constant(h, keep);
  }
  prototypes_ = ag::transpose(h);
  frozen_ = true;
  return prototypes_;
}

const Var& PrototypeBank::prototypes() const {
  if (!frozen_) throw ValidationError("prototypes read before learn() for this batch");
  return prototypes_;
}

void PrototypeBank::release() {
  frozen_ = false;
  prototypes_ = Var();
}

void PrototypeBank::collect(nn::ParameterList& out) const {
  const std::string m(modality_name(modality_));
  compression_.collect(out, m + "/proto/g");
  mixing_.collect(out, m + "/proto/mix");
}

std::string PrototypeBank::compression_weight_name() const {
  return std::string(modality_name(modality_)) + "/proto/g/W";
}

Var prototype_attention(const Var& z, const Var& prototypes, const Vector& gamma, double mask_neg,
                        double cos_eps) {
  if (gamma.size() != z.rows()) throw ValidationError("prototype_attention: gamma length mismatch");
  Var sim = ag::cosine_similarity(z, prototypes, cos_eps);
  BoolMatrix mask = BoolMatrix::Constant(sim.rows(), sim.cols(), false);
  for (Eigen::Index i = 0; i < gamma.size(); ++i) {
    if (gamma(i) == 0.0) mask.row(i).setConstant(true);
  }
  return ag::softmax_rows(ag::masked_fill(sim, mask, mask_neg));
}

PromptGenerator::PromptGenerator(int d, int p, Rng& rng)
    : ffn1_(d, d, d, rng), ffn2_(d, d, d, rng), projector_(d, d, p, rng) {}

Var PromptGenerator::generate(const Var& attention, const Var& prototypes, const Var& z_bar) const {
  if (attention.cols() != prototypes.rows() || attention.rows() != z_bar.rows()) {
    throw ValidationError("generate_prompt: shape mismatch");
  }
  Var pooled = ag::matmul(attention, prototypes);
  return projector_.forward(ag::add(ffn1_.forward(pooled), ffn2_.forward(z_bar)));
}

Var PromptGenerator::generate_without_prototypes(const Var& z_bar) const {
  return projector_.forward(ffn2_.forward(z_bar));
}

void PromptGenerator::collect(nn::ParameterList& out, const std::string& prefix) const {
  ffn1_.collect(out, prefix + "/ffn1");
  ffn2_.collect(out, prefix + "/ffn2");
  projector_.collect(out, prefix + "/mlp_p");
}

Var momentum_update(const Var& p_prev, const Var& p_tilde, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("momentum_update: lambda must be in [0, 1]");
  return ag::add(ag::scale(p_prev, lambda), ag::scale(p_tilde, 1.0 - lambda));
}

Vector logit_error(const Matrix& head_predictions, const fusion::TaskTargets& targets) {
  const Eigen::Index n = head_predictions.rows();
  Vector e(n);
  if (targets.task == Task::kClassification) {
    for (Eigen::Index i = 0; i < n; ++i) {
      e(i) = std::abs(1.0 - head_predictions(i, targets.classes[static_cast<std::size_t>(i)]));
    }
  } else {
    e = (targets.scores - head_predictions.col(0)).cwiseAbs();
  }
  return e;
}

std::vector<Vector> modulation_weights_raw(std::span<const Vector> errors, double eps) {
  const std::size_t m = errors.size();
  if (m < 2) throw ValidationError("modulation_weights: need at least two modalities");
  const Eigen::Index n = errors[0].size();
  for (const auto& e : errors) {
    if (e.size() != n) throw ValidationError("modulation_weights: error vectors differ in length");
  }
  if (n < 2) throw ValidationError("modulation_weights: n must be >= 2 (leave-one-out sums)");
  std::vector<Vector> out(m, Vector::Zero(n));
  for (std::size_t u = 0; u < m; ++u) {
    for (std::size_t v = 0; v < m; ++v) {
      if (v == u) continue;
      const Vector diff = errors[u] - errors[v];
      const double total = diff.sum();
      if (std::abs(total) < eps) {
        out[u].array() += 1.0;
      } else {
        out[u].array() += (total - diff.array()) / total;
      }
    }
    out[u] *= 0.5;
  }
  return out;
}

std::vector<Vector> modulation_weights(std::span<const Vector> errors, double eps, double w_min,
                                       double w_max) {
  std::vector<Vector> w = modulation_weights_raw(errors, eps);
  for (auto& wu : w) wu = wu.cwiseMax(w_min).cwiseMin(w_max);
  return w;
}

void apply_gradient_modulation(Matrix& gradient, const Vector& weights) {
  if (weights.size() != gradient.rows()) {
    throw ValidationError("apply_gradient_modulation: weight length does not match gradient rows");
  }
  gradient = weights.asDiagonal() * gradient;
}

}  // namespace comp::prompting
