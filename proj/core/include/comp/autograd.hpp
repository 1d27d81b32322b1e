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

// Matrix-level reverse-mode differentiation over Eigen doubles.
//
// A Var is a handle to a node holding a value and, once backward() has run,
// the gradient of the root with respect to that value. Graphs are rebuilt on
// every forward pass; leaves that require gradients (parameters) persist and
// accumulate until zero_grad().

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace comp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

namespace ag {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Matrix&)> backward_fn;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  const std::shared_ptr<Node>& node() const { return node_; }

  /// Resets the gradient to zeros of the value's shape.
  void zero_grad();

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var parameter(Matrix value);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& x, double s);
/// x [n x k] + b [1 x k] broadcast over rows.
Var add_bias(const Var& x, const Var& b);
Var transpose(const Var& x);
/// Exact (erf) GeLU.
Var gelu(const Var& x);
Var softmax_rows(const Var& x);
/// Entries where mask is true become `fill`; they carry no gradient.
Var masked_fill(const Var& x, const BoolMatrix& mask, double fill);
/// Each row divided by max(||row||, eps).
Var row_normalize(const Var& x, double eps);
/// Pairwise cosine similarity of rows: [n x d], [c x d] -> [n x c].
Var cosine_similarity(const Var& a, const Var& b, double eps);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);
/// Row i of x [n x k] times w(i) for w [n x 1].
Var scale_rows(const Var& x, const Var& w);
/// Elementwise product with a fixed multiplier (dropout keep-mask / (1-p)).
Var mul_constant(const Var& x, const Matrix& factor);
Var sum(const Var& x);

/// Reduction-weighted negative log-likelihood of class probabilities.
/// Rows with weight 0 are ignored. mean: divide by the total weight.
Var nll_from_probs(const Var& probs, std::span<const int> labels,
                   const Vector& row_weights, bool mean, double eps);
/// Weighted squared error of a [n x 1] prediction against targets.
Var squared_error(const Var& pred, const Vector& target,
                  const Vector& row_weights, bool mean);
/// Mean over weighted rows and all columns of (x - target)^2.
Var masked_row_mse(const Var& x, const Matrix& target,
                   const Vector& row_weights);

/// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
void backward(const Var& root);

}  // namespace ag
}  // namespace comp
