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
#include <vector>

#include "comp/config.hpp"
#include "comp/nn.hpp"
#include "comp/prompting.hpp"

namespace comp::propagation {

using ag::Var;

/// The two source modalities feeding modality u, in canonical (a, t, v)
/// order: a <- (t, v), t <- (a, v), v <- (a, t).
std::array<int, 2> prompt_sources(int u);

/// Multi-head scaled dot-product attention across the instance dimension.
class SelfAttentionLayer {
 public:
  SelfAttentionLayer() = default;
  SelfAttentionLayer(int d, int heads, Rng& rng);

  /// Missing instances (gamma 0) are excluded as keys but still query.
  /// Returns the attention output only; the caller adds the residual.
  Var forward(const Var& g, const Vector& gamma, double mask_neg) const;

  void collect(nn::ParameterList& out, const std::string& prefix) const;
  int heads() const { return heads_; }
  nn::Linear& query() { return query_; }
  nn::Linear& key() { return key_; }
  nn::Linear& value() { return value_; }
  nn::Linear& output() { return output_; }

 private:
  int heads_ = 1;
  nn::Linear query_;
  nn::Linear key_;
  nn::Linear value_;
  nn::Linear output_;
};

/// MSA(G) with missing keys masked. With no observed instance the
/// attention is skipped and G is returned unchanged.
Var masked_self_attention(const Var& g, const Vector& gamma, const SelfAttentionLayer& layer,
                          double mask_neg);

struct KPOutput {
  Var z_bar;
  std::array<Var, 2> prompts;  // returned prompts, same source order as the input
};

/// down_proj [d+2p -> d], m residual MSA layers, up_proj [d -> d+2p].
class KPBlock {
 public:
  KPBlock() = default;
  KPBlock(int d, int p, int m_msa, int heads, Rng& rng);

  /// Input layout is [Z, P from first source, P from second source].
  KPOutput forward(const Var& z, const Var& prompt_first, const Var& prompt_second, const Vector& gamma,
                   double mask_neg) const;

  void collect(nn::ParameterList& out, const std::string& prefix) const;
  int d() const { return d_; }
  int p() const { return p_; }
  nn::Linear& down() { return down_; }
  nn::Linear& up() { return up_; }
  std::vector<SelfAttentionLayer>& layers() { return layers_; }

 private:
  int d_ = 0;
  int p_ = 0;
  nn::Linear down_;
  std::vector<SelfAttentionLayer> layers_;
  nn::Linear up_;
};

KPOutput kp_block(const Var& z, const Var& prompt_first, const Var& prompt_second, const Vector& gamma,
                  const KPBlock& block, double mask_neg);

/// Per-block parameters of the PG/KP stack for all three modalities.
struct BlockWeights {
  std::array<prompting::PromptGenerator, kNumModalities> generators;
  std::array<KPBlock, kNumModalities> kp;
};

/// What each block actually consumed, for freeze and momentum checks.
struct PipelineTrace {
  std::vector<std::array<Matrix, kNumModalities>> prototypes_read;
  std::vector<std::array<Matrix, kNumModalities>> fresh_prompts;
  std::vector<std::array<std::array<Matrix, 2>, kNumModalities>> prompts_in;
};

/// Runs L interleaved PG/KP blocks. For block l and modality u:
///   P_tilde^u = PG(Z^u_l)                         (prototypes frozen per batch)
///   P^{vu}_l  = lambda Pbar^{vu}_{l-1} + (1 - lambda) P_tilde^v, Pbar_0 = 0
///   (Z^u_{l+1}, Pbar^{vu}_l, Pbar^{wu}_l) = KP^u_l(Z^u_l, P^{vu}_l, P^{wu}_l)
/// With kp off the input features are returned unchanged.
std::array<Var, kNumModalities> run_pipeline(const std::array<Var, kNumModalities>& features,
                                             const std::array<Vector, kNumModalities>& gammas,
                                             const std::array<prompting::PrototypeBank, kNumModalities>& banks,
                                             const std::vector<BlockWeights>& blocks, const ModelConfig& config,
                                             const Ablation& ablation, PipelineTrace* trace = nullptr);

}  // namespace comp::propagation
