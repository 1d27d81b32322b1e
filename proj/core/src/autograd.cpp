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

#include "comp/autograd.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "comp/error.hpp"

namespace comp::ag {

namespace {

using NodePtr = std::shared_ptr<Node>;

Var make_op(Matrix value, std::vector<NodePtr> parents,
            std::function<void(const Matrix&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  node->requires_grad = any;
  if (any) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

Var constant(Matrix value) { return Var(std::move(value), false); }
Var parameter(Matrix value) { return Var(std::move(value), true); }

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ValidationError("matmul: inner dimension mismatch");
  NodePtr pa = a.node(), pb = b.node();
  return make_op(a.value() * b.value(), {pa, pb}, [pa, pb](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(g * pb->value.transpose());
    if (pb->requires_grad) pb->accumulate(pa->value.transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  NodePtr pa = a.node(), pb = b.node();
  return make_op(a.value() + b.value(), {pa, pb}, [pa, pb](const Matrix& g) {
    pa->accumulate(g);
    pb->accumulate(g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  NodePtr pa = a.node(), pb = b.node();
  return make_op(a.value() - b.value(), {pa, pb}, [pa, pb](const Matrix& g) {
    pa->accumulate(g);
    if (pb->requires_grad) pb->accumulate(-g);
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  NodePtr pa = a.node(), pb = b.node();
  return make_op(a.value().cwiseProduct(b.value()), {pa, pb}, [pa, pb](const Matrix& g) {
    if (pa->requires_grad) pa->accumulate(g.cwiseProduct(pb->value));
    if (pb->requires_grad) pb->accumulate(g.cwiseProduct(pa->value));
  });
}

Var scale(const Var& x, double s) {
  NodePtr px = x.node();
  return make_op(x.value() * s, {px}, [px, s](const Matrix& g) { px->accumulate(g * s); });
}

Var add_bias(const Var& x, const Var& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) throw ValidationError("add_bias: bias shape");
  NodePtr px = x.node(), pb = b.node();
  Matrix out = x.value().rowwise() + b.value().row(0);
  return make_op(std::move(out), {px, pb}, [px, pb](const Matrix& g) {
    px->accumulate(g);
    if (pb->requires_grad) pb->accumulate(g.colwise().sum());
  });
}

Var transpose(const Var& x) {
  NodePtr px = x.node();
  return make_op(x.value().transpose(), {px},
                 [px](const Matrix& g) { px->accumulate(g.transpose()); });
}

Var gelu(const Var& x) {
  NodePtr px = x.node();
  const Matrix& v = x.value();
  Matrix out = v.unaryExpr([](double z) { return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2)); });
  return make_op(std::move(out), {px}, [px](const Matrix& g) {
    Matrix d = px->value.unaryExpr([](double z) {
      const double cdf = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * z * z) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
      return cdf + z * pdf;
    });
    px->accumulate(g.cwiseProduct(d));
  });
}

Var softmax_rows(const Var& x) {
  NodePtr px = x.node();
  Matrix y = x.value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  Matrix y_copy = y;
  return make_op(std::move(y), {px}, [px, y = std::move(y_copy)](const Matrix& g) {
    Vector dot = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct(g.colwise() - dot);
    px->accumulate(dx);
  });
}

Var masked_fill(const Var& x, const BoolMatrix& mask, double fill) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw ValidationError("masked_fill: mask shape");
  }
  NodePtr px = x.node();
  Matrix out = mask.select(Matrix::Constant(x.rows(), x.cols(), fill), x.value());
  return make_op(std::move(out), {px}, [px, mask](const Matrix& g) {
    px->accumulate(mask.select(Matrix::Zero(g.rows(), g.cols()), g));
  });
}

Var row_normalize(const Var& x, double eps) {
  NodePtr px = x.node();
  const Matrix& v = x.value();
  Vector norms = v.rowwise().norm();
  Vector denom = norms.cwiseMax(eps);
  Matrix out = denom.cwiseInverse().asDiagonal() * v;
  Matrix y = out;
  return make_op(std::move(out), {px}, [px, norms, denom, y = std::move(y), eps](const Matrix& g) {
    Matrix dx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      if (norms(i) > eps) {
        const double proj = g.row(i).dot(y.row(i));
        dx.row(i) = (g.row(i) - proj * y.row(i)) / norms(i);
      } else {
        dx.row(i) = g.row(i) / eps;
      }
    }
    px->accumulate(dx);
  });
}

Var cosine_similarity(const Var& a, const Var& b, double eps) {
  if (a.cols() != b.cols()) throw ValidationError("cosine_similarity: width mismatch");
  return matmul(row_normalize(a, eps), transpose(row_normalize(b, eps)));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no inputs");
  const Eigen::Index n = parts.front().rows();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw ValidationError("concat_cols: row mismatch");
    total += p.cols();
  }
  Matrix out(n, total);
  std::vector<NodePtr> parents;
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    parents.push_back(p.node());
    widths.push_back(p.cols());
  }
  std::vector<NodePtr> captured = parents;
  return make_op(std::move(out), std::move(parents),
                 [captured = std::move(captured), widths = std::move(widths)](const Matrix& g) {
                   Eigen::Index offset = 0;
                   for (std::size_t k = 0; k < captured.size(); ++k) {
                     if (captured[k]->requires_grad) {
                       captured[k]->accumulate(g.middleCols(offset, widths[k]));
                     }
                     offset += widths[k];
                   }
                 });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw ValidationError("slice_cols: range out of bounds");
  }
  NodePtr px = x.node();
  return make_op(x.value().middleCols(start, count), {px}, [px, start, count](const Matrix& g) {
    Matrix full = Matrix::Zero(px->value.rows(), px->value.cols());
    full.middleCols(start, count) = g;
    px->accumulate(full);
  });
}

Var scale_rows(const Var& x, const Var& w) {
  if (w.cols() != 1 || w.rows() != x.rows()) throw ValidationError("scale_rows: weight shape");
  NodePtr px = x.node(), pw = w.node();
  Matrix out = w.value().col(0).asDiagonal() * x.value();
  return make_op(std::move(out), {px, pw}, [px, pw](const Matrix& g) {
    if (px->requires_grad) px->accumulate(pw->value.col(0).asDiagonal() * g);
    if (pw->requires_grad) pw->accumulate(g.cwiseProduct(px->value).rowwise().sum());
  });
}

Var mul_constant(const Var& x, const Matrix& factor) {
  if (factor.rows() != x.rows() || factor.cols() != x.cols()) {
    throw ValidationError("mul_constant: shape mismatch");
  }
  NodePtr px = x.node();
  return make_op(x.value().cwiseProduct(factor), {px},
                 [px, factor](const Matrix& g) { px->accumulate(g.cwiseProduct(factor)); });
}

Var sum(const Var& x) {
  NodePtr px = x.node();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return make_op(std::move(out), {px}, [px](const Matrix& g) {
    px->accumulate(Matrix::Constant(px->value.rows(), px->value.cols(), g(0, 0)));
  });
}

Var nll_from_probs(const Var& probs, std::span<const int> labels, const Vector& row_weights,
                   bool mean, double eps) {
  const Eigen::Index n = probs.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n || row_weights.size() != n) {
    throw ValidationError("nll_from_probs: label/weight length mismatch");
  }
  const double total = row_weights.sum();
  const double denom = (mean && total > 0.0) ? total : 1.0;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (row_weights(i) == 0.0) continue;
    const int y = labels[i];
    if (y < 0 || y >= probs.cols()) throw ValidationError("nll_from_probs: label out of range");
    loss -= row_weights(i) * std::log(std::max(probs.value()(i, y), eps));
  }
  Matrix out(1, 1);
  out(0, 0) = loss / denom;
  NodePtr pp = probs.node();
  std::vector<int> ys(labels.begin(), labels.end());
  return make_op(std::move(out), {pp}, [pp, ys = std::move(ys), row_weights, denom, eps](const Matrix& g) {
    Matrix dp = Matrix::Zero(pp->value.rows(), pp->value.cols());
    for (Eigen::Index i = 0; i < dp.rows(); ++i) {
      if (row_weights(i) == 0.0) continue;
      const double p = pp->value(i, ys[i]);
      if (p > eps) dp(i, ys[i]) = -g(0, 0) * row_weights(i) / (p * denom);
    }
    pp->accumulate(dp);
  });
}

Var squared_error(const Var& pred, const Vector& target, const Vector& row_weights, bool mean) {
  if (pred.cols() != 1 || pred.rows() != target.size() || target.size() != row_weights.size()) {
    throw ValidationError("squared_error: shape mismatch");
  }
  const double total = row_weights.sum();
  const double denom = (mean && total > 0.0) ? total : 1.0;
  Vector diff = pred.value().col(0) - target;
  Matrix out(1, 1);
  out(0, 0) = row_weights.dot(diff.cwiseProduct(diff)) / denom;
  NodePtr pp = pred.node();
  return make_op(std::move(out), {pp}, [pp, diff, row_weights, denom](const Matrix& g) {
    Matrix dp = (2.0 * g(0, 0) / denom) * row_weights.cwiseProduct(diff);
    pp->accumulate(dp);
  });
}

Var masked_row_mse(const Var& x, const Matrix& target, const Vector& row_weights) {
  if (x.rows() != target.rows() || x.cols() != target.cols() || row_weights.size() != x.rows()) {
    throw ValidationError("masked_row_mse: shape mismatch");
  }
  const double total = row_weights.sum();
  const double denom = total > 0.0 ? total * static_cast<double>(x.cols()) : 1.0;
  Matrix diff = x.value() - target;
  Matrix out(1, 1);
  out(0, 0) = row_weights.dot(diff.cwiseProduct(diff).rowwise().sum()) / denom;
  NodePtr px = x.node();
  return make_op(std::move(out), {px}, [px, diff, row_weights, denom](const Matrix& g) {
    Matrix dx = (2.0 * g(0, 0) / denom) * (row_weights.asDiagonal() * diff);
    px->accumulate(dx);
  });
}

void backward(const Var& root) {
  if (!root.defined() || !root.requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Node* r = root.node().get();
  r->accumulate(Matrix::Ones(r->value.rows(), r->value.cols()));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() != 0) node->backward_fn(node->grad);
  }
}

}  // namespace comp::ag
