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

#include <span>
#include <vector>

#include "comp/config.hpp"
#include "comp/fusion.hpp"
#include "comp/nn.hpp"

namespace comp::prompting {

using ag::Var;

/// Batch-dimension compression g^u of one modality's latents into c
/// prototypes: A = (Dropout(Linear_cc(GeLU(Z^T M + b))))^T.
///
/// learn() computes A once per batch and freezes it; every knowledge
/// propagation block of that batch reads the same A through prototypes().
/// release() ends the batch.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(Modality modality, int batch_n, int c, double dropout, Rng& rng);

  /// Throws ValidationError when z has a row count other than batch_n.
  const Var& learn(const Var& z, Rng* dropout_rng);
  const Var& prototypes() const;
  bool frozen() const { return frozen_; }
  void release();

  int batch_n() const { return compression_.in_features(); }
  int prototype_count() const { return compression_.out_features(); }
  /// g^u: weight is M^u [n x c], bias b^u [1 x c].
  nn::Linear& compression() { return compression_; }
  const nn::Linear& compression() const { return compression_; }
  nn::Linear& mixing() { return mixing_; }
  void set_dropout(double p) { dropout_ = p; }
  void set_activation(nn::Activation act) { act_ = act; }
  void collect(nn::ParameterList& out) const;
  std::string compression_weight_name() const;

 private:
  Modality modality_ = Modality::kAudio;
  nn::Linear compression_;
  nn::Linear mixing_;
  nn::Activation act_ = nn::Activation::kGelu;
  double dropout_ = 0.0;
  Var prototypes_;
  bool frozen_ = false;
};

/// S = row-softmax(cos(Z, A) with every entry of a missing row (gamma 0)
/// set to mask_neg). Missing rows come out uniform.
Var prototype_attention(const Var& z, const Var& prototypes, const Vector& gamma, double mask_neg,
                        double cos_eps);

/// FFN1, FFN2 (d -> d -> d) and MLP_p (d -> d -> p) of one PG block.
class PromptGenerator {
 public:
  PromptGenerator() = default;
  PromptGenerator(int d, int p, Rng& rng);

  /// P_tilde = MLP_p(FFN1(S A) + FFN2(Zbar)).
  Var generate(const Var& attention, const Var& prototypes, const Var& z_bar) const;
  /// PG removed: P_tilde = MLP_p(FFN2(Zbar)).
  Var generate_without_prototypes(const Var& z_bar) const;

  void collect(nn::ParameterList& out, const std::string& prefix) const;
  nn::Mlp& ffn1() { return ffn1_; }
  nn::Mlp& ffn2() { return ffn2_; }
  nn::Mlp& projector() { return projector_; }

 private:
  nn::Mlp ffn1_;
  nn::Mlp ffn2_;
  nn::Mlp projector_;
};

/// lambda * P_prev + (1 - lambda) * P_tilde. lambda outside [0, 1] throws.
Var momentum_update(const Var& p_prev, const Var& p_tilde, double lambda);

/// |gt - logit| per sample. Classification: head probabilities at the true
/// class with gt = 1. Regression: |y - prediction|.
Vector logit_error(const Matrix& head_predictions, const fusion::TaskTargets& targets);

/// Unclamped leave-one-out ratios, averaged with the 1/2 factor. Ratios whose
/// denominator magnitude is below eps become the neutral 1.
std::vector<Vector> modulation_weights_raw(std::span<const Vector> errors, double eps);

/// Raw weights clamped to [w_min, w_max]. Throws when n < 2.
std::vector<Vector> modulation_weights(std::span<const Vector> errors, double eps, double w_min,
                                       double w_max);

/// Row i of the gradient of M^u scaled by w(i); broadcast over columns.
void apply_gradient_modulation(Matrix& gradient, const Vector& weights);

}  // namespace comp::prompting
