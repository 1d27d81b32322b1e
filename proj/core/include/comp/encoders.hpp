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
#include <span>

#include "comp/config.hpp"
#include "comp/data.hpp"
#include "comp/fusion.hpp"
#include "comp/nn.hpp"

namespace comp::encoders {

using ag::Var;

/// Enc^u, Dec^u, f^u (2-layer GeLU perceptrons) and the modality classifier
/// head. Every stack emits latents of the shared width d.
class ModalityEncoderStack {
 public:
  ModalityEncoderStack() = default;
  ModalityEncoderStack(Modality modality, int d_in, int d, int outputs, Rng& rng);

  Var encode(const Var& x_hat) const { return encoder_.forward(x_hat); }
  Var decode(const Var& z) const { return decoder_.forward(z); }
  /// Classifier^u(f^u(z)): used on Z in stage 1 and on Zbar in stage 2.
  Var classify(const Var& z) const { return head_.forward(updater_.forward(z)); }

  void collect(nn::ParameterList& out) const;
  /// Encoder, updater and head; the decoder is only trained in stage 1.
  void collect_stage2(nn::ParameterList& out) const;

  Modality modality() const { return modality_; }
  int input_dim() const { return encoder_.first().in_features(); }
  int latent_dim() const { return encoder_.second().out_features(); }
  nn::Mlp& encoder() { return encoder_; }
  nn::Mlp& decoder() { return decoder_; }
  nn::Mlp& updater() { return updater_; }
  nn::Linear& head() { return head_; }
  const nn::Mlp& encoder() const { return encoder_; }
  const nn::Linear& head() const { return head_; }

 private:
  Modality modality_ = Modality::kAudio;
  nn::Mlp encoder_;
  nn::Mlp decoder_;
  nn::Mlp updater_;
  nn::Linear head_;
};

/// Z^u = Enc^u(X_hat^u). Throws on non-finite input.
Var encode(const ModalityBatch& batch, const ModalityEncoderStack& stack);
Var encode(const Matrix& x_hat, const ModalityEncoderStack& stack);

struct Stage1Terms {
  Var reconstruction;  // Dec^u(Z^u)
  Matrix x_hat;
  Vector observed;     // gamma^u restricted to real rows
  Var predictions;     // probabilities or scalar scores of the modality head
};

struct Stage1Loss {
  Var total;
  std::array<double, kNumModalities> reconstruction{};
  std::array<double, kNumModalities> task{};
};

/// Sum over modalities of masked reconstruction MSE plus the task loss,
/// both over observed instances only. A modality with no observed instance
/// contributes 0.
Stage1Loss stage1_loss(std::span<const Stage1Terms> terms, const fusion::TaskTargets& targets,
                       LossReduction reduction);

}  // namespace comp::encoders
