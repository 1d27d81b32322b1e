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

#include "comp/propagation.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "comp/error.hpp"

namespace comp::propagation {

std::array<int, 2> prompt_sources(int u) {
  switch (u) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    case 2: return {0, 1};
    default: throw ValidationError("prompt_sources: modality index out of range");
  }
}

SelfAttentionLayer::SelfAttentionLayer(int d, int heads, Rng& rng)
    : heads_(heads), query_(d, d, rng), key_(d, d, rng), value_(d, d, rng), output_(d, d, rng) {
  if (d % heads != 0) throw ValidationError("attention: d must be divisible by heads");
}

Var SelfAttentionLayer::forward(const Var& g, const Vector& gamma, double mask_neg) const {
  const Eigen::Index n = g.rows();
  const Eigen::Index d = g.cols();
  if (gamma.size() != n) throw ValidationError("attention: gamma length mismatch");
  const Eigen::Index dh = d / heads_;
  Var q = query_.forward(g);
  Var k = key_.forward(g);
  Var v = value_.forward(g);
  BoolMatrix key_mask = BoolMatrix::Constant(n, n, false);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (gamma(j) == 0.0) key_mask.col(j).setConstant(true);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    Var qh = ag::slice_cols(q, h * dh, dh);
    Var kh = ag::slice_cols(k, h * dh, dh);
    Var vh = ag::slice_cols(v, h * dh, dh);
    Var logits = ag::scale(ag::matmul(qh, ag::transpose(kh)), scale);
    Var weights = ag::softmax_rows(ag::masked_fill(logits, key_mask, mask_neg));
    heads.push_back(ag::matmul(weights, vh));
  }
  return output_.forward(ag::concat_cols(heads));
}

void SelfAttentionLayer::collect(nn::ParameterList& out, const std::string& prefix) const {
  query_.collect(out, prefix + "/q");
  key_.collect(out, prefix + "/k");
  value_.collect(out, prefix + "/v");
  output_.collect(out, prefix + "/o");
}

Var masked_self_attention(const Var& g, const Vector& gamma, const SelfAttentionLayer& layer,
                          double mask_neg) {
  if (gamma.sum() == 0.0) {
    spdlog::debug("masked_self_attention: every instance missing, attention skipped");
    return g;
  }
  return layer.forward(g, gamma, mask_neg);
}

KPBlock::KPBlock(int d, int p, int m_msa, int heads, Rng& rng)
    : d_(d), p_(p), down_(d + 2 * p, d, rng), up_(d, d + 2 * p, rng) {
  for (int k = 0; k < m_msa; ++k) layers_.emplace_back(d, heads, rng);
}

KPOutput KPBlock::forward(const Var& z, const Var& prompt_first, const Var& prompt_second,
                          const Vector& gamma, double mask_neg) const {
  if (z.cols() != d_ || prompt_first.cols() != p_ || prompt_second.cols() != p_ ||
      prompt_first.rows() != z.rows() || prompt_second.rows() != z.rows() || gamma.size() != z.rows()) {
    throw ValidationError("kp_block: input shapes do not match block (d, p)");
  }
  const std::array<Var, 3> parts = {z, prompt_first, prompt_second};
  Var g = down_.forward(ag::concat_cols(parts));
  const bool any_observed = gamma.sum() > 0.0;
  for (const auto& layer : layers_) {
    if (any_observed) g = ag::add(g, layer.forward(g, gamma, mask_neg));
  }
  Var out = up_.forward(g);
  return {ag::slice_cols(out, 0, d_), {ag::slice_cols(out, d_, p_), ag::slice_cols(out, d_ + p_, p_)}};
}

void KPBlock::collect(nn::ParameterList& out, const std::string& prefix) const {
  down_.collect(out, prefix + "/down");
  for (std::size_t k = 0; k < layers_.size(); ++k) layers_[k].collect(out, prefix + "/msa" + std::to_string(k));
  up_.collect(out, prefix + "/up");
}

KPOutput kp_block(const Var& z, const Var& prompt_first, const Var& prompt_second, const Vector& gamma,
                  const KPBlock& block, double mask_neg) {
  return block.forward(z, prompt_first, prompt_second, gamma, mask_neg);
}

std::array<Var, kNumModalities> run_pipeline(const std::array<Var, kNumModalities>& features,
                                             const std::array<Vector, kNumModalities>& gammas,
                                             const std::array<prompting::PrototypeBank, kNumModalities>& banks,
                                             const std::vector<BlockWeights>& blocks, const ModelConfig& config,
                                             const Ablation& ablation, PipelineTrace* trace) {
  if (!ablation.kp) return features;
  if (static_cast<int>(blocks.size()) < config.L) throw ValidationError("run_pipeline: fewer blocks than L");

  const Eigen::Index n = features[0].rows();
  std::array<Var, kNumModalities> z = features;
  std::array<std::array<Var, 2>, kNumModalities> returned;
  for (auto& r : returned) r = {ag::constant(Matrix::Zero(n, config.p)), ag::constant(Matrix::Zero(n, config.p))};

  for (int l = 0; l < config.L; ++l) {
    const auto& weights = blocks[static_cast<std::size_t>(l)];
    std::array<Var, kNumModalities> fresh;
    std::array<Matrix, kNumModalities> read;
    for (int u = 0; u < kNumModalities; ++u) {
      if (ablation.pg) {
        const Var& a = banks[u].prototypes();
        read[u] = a.value();
        Var s = prompting::prototype_attention(z[u], a, gammas[u], config.mask_neg, config.cos_eps);
        fresh[u] = weights.generators[u].generate(s, a, z[u]);
      } else {
        fresh[u] = weights.generators[u].generate_without_prototypes(z[u]);
      }
    }
    std::array<Var, kNumModalities> next;
    std::array<std::array<Matrix, 2>, kNumModalities> consumed;
    for (int u = 0; u < kNumModalities; ++u) {
      const auto sources = prompt_sources(u);
      std::array<Var, 2> in;
      for (int k = 0; k < 2; ++k) {
        in[k] = prompting::momentum_update(returned[u][k], fresh[sources[k]], config.lambda);
        consumed[u][k] = in[k].value();
      }
      KPOutput out = weights.kp[u].forward(z[u], in[0], in[1], gammas[u], config.mask_neg);
      next[u] = out.z_bar;
      returned[u] = out.prompts;
    }
    if (trace != nullptr) {
      if (ablation.pg) trace->prototypes_read.push_back(read);
      std::array<Matrix, kNumModalities> fresh_values;
      for (int u = 0; u < kNumModalities; ++u) fresh_values[u] = fresh[u].value();
      trace->fresh_prompts.push_back(fresh_values);
      trace->prompts_in.push_back(consumed);
    }
    z = next;
  }
  return z;
}

}  // namespace comp::propagation
