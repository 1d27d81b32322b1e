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

#include "comp/nn.hpp"

#include <cmath>

#include "comp/error.hpp"

namespace comp::nn {

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  // Row-major fill order so the draw sequence does not depend on storage order.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

}  // namespace

Linear::Linear(int in, int out, Rng& rng) {
  if (in < 1 || out < 0) throw ValidationError("Linear: invalid dimensions");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = ag::parameter(uniform_matrix(in, out, bound, rng));
  bias_ = ag::parameter(uniform_matrix(1, out, bound, rng));
}

Var Linear::forward(const Var& x) const {
  return ag::add_bias(ag::matmul(x, weight_), bias_);
}

void Linear::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "/W", weight_});
  out.push_back({prefix + "/b", bias_});
}

void Linear::set_identity() {
  if (weight_.rows() != weight_.cols()) throw ValidationError("set_identity: non-square layer");
  weight_.mutable_value().setIdentity();
  bias_.mutable_value().setZero();
}

Mlp::Mlp(int in, int hidden, int out, Rng& rng, Activation act)
    : first_(in, hidden, rng), second_(hidden, out, rng), act_(act) {}

Var Mlp::forward(const Var& x) const {
  return second_.forward(activate(first_.forward(x), act_));
}

void Mlp::collect(ParameterList& out, const std::string& prefix) const {
  first_.collect(out, prefix + "/l1");
  second_.collect(out, prefix + "/l2");
}

void Mlp::set_identity() {
  first_.set_identity();
  second_.set_identity();
  act_ = Activation::kIdentity;
}

Var activate(const Var& x, Activation act) {
  return act == Activation::kGelu ? ag::gelu(x) : x;
}

double checksum(const ParameterList& params) {
  double s = 0.0;
  for (const auto& p : params) s += p.var.value().squaredNorm();
  return s;
}

Optimizer::Optimizer(ParameterList params, OptimizerKind kind, double lr)
    : params_(std::move(params)), kind_(kind), lr_(lr) {
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  for (const auto& p : params_) {
    first_moment_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
    second_moment_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void Optimizer::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var& var = params_[k].var;
    if (var.grad().size() == 0) continue;
    const Matrix& g = var.grad();
    if (kind_ == OptimizerKind::kSgd) {
      var.mutable_value() -= lr_ * g;
      continue;
    }
    first_moment_[k] = beta1_ * first_moment_[k] + (1.0 - beta1_) * g;
    second_moment_[k] = beta2_ * second_moment_[k] + (1.0 - beta2_) * g.cwiseProduct(g);
    var.mutable_value().array() -=
        lr_ * (first_moment_[k].array() / bc1) / ((second_moment_[k].array() / bc2).sqrt() + eps_);
  }
}

}  // namespace comp::nn
