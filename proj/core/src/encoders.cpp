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

#include "comp/encoders.hpp"

#include <spdlog/spdlog.h>

#include "comp/error.hpp"

namespace comp::encoders {

ModalityEncoderStack::ModalityEncoderStack(Modality modality, int d_in, int d, int outputs, Rng& rng)
    : modality_(modality),
      encoder_(d_in, d, d, rng),
      decoder_(d, d, d_in, rng),
      updater_(d, d, d, rng),
      head_(d, outputs, rng) {}

void ModalityEncoderStack::collect(nn::ParameterList& out) const {
  const std::string m(modality_name(modality_));
  encoder_.collect(out, m + "/enc");
  decoder_.collect(out, m + "/dec");
  updater_.collect(out, m + "/upd");
  head_.collect(out, m + "/head");
}

void ModalityEncoderStack::collect_stage2(nn::ParameterList& out) const {
  const std::string m(modality_name(modality_));
  encoder_.collect(out, m + "/enc");
  updater_.collect(out, m + "/upd");
  head_.collect(out, m + "/head");
}

Var encode(const Matrix& x_hat, const ModalityEncoderStack& stack) {
  if (!x_hat.allFinite()) throw ValidationError("encode: non-finite input features");
  if (x_hat.cols() != stack.input_dim()) throw ValidationError("encode: input width mismatch");
  return stack.encode(ag::constant(x_hat));
}

Var encode(const ModalityBatch& batch, const ModalityEncoderStack& stack) {
  return encode(batch.x_hat, stack);
}

Stage1Loss stage1_loss(std::span<const Stage1Terms> terms, const fusion::TaskTargets& targets,
                       LossReduction reduction) {
  Stage1Loss out;
  Var total = ag::constant(Matrix::Zero(1, 1));
  for (std::size_t u = 0; u < terms.size(); ++u) {
    const auto& t = terms[u];
    if (t.observed.sum() == 0.0) {
      spdlog::debug("stage1_loss: modality {} has no observed instance in this batch", u);
      continue;
    }
    Var rec = ag::masked_row_mse(t.reconstruction, t.x_hat, t.observed);
    Var task = fusion::task_loss(t.predictions, targets, t.observed, reduction);
    out.reconstruction[u] = rec.value()(0, 0);
    out.task[u] = task.value()(0, 0);
    total = ag::add(total, ag::add(rec, task));
  }
  out.total = total;
  return out;
}

}  // namespace comp::encoders
