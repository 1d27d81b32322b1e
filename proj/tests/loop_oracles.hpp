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

// Straight loops, no Eigen expressions: independent references for the
// vectorized implementations. Shared by unit tests and the acceptance suite.

#include <array>
#include <cmath>
#include <vector>

#include "comp/autograd.hpp"

namespace oracle {

using comp::Matrix;
using comp::Vector;

inline double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

inline std::vector<double> softmax(const std::vector<double>& row) {
  double m = row[0];
  for (double v : row) m = std::max(m, v);
  std::vector<double> out(row.size());
  double s = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) s += out[j] = std::exp(row[j] - m);
  for (double& v : out) v /= s;
  return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (long i = 0; i < a.rows(); ++i) {
    for (long j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (long k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

// x W + b, b broadcast over rows.
inline Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix out = matmul(x, w);
  for (long i = 0; i < out.rows(); ++i) {
    for (long j = 0; j < out.cols(); ++j) out(i, j) += b(0, j);
  }
  return out;
}

// Row-wise softmax over cosine similarities; missing rows are uniform.
inline Matrix prototype_attention(const Matrix& z, const Matrix& a, const Vector& gamma) {
  Matrix s(z.rows(), a.rows());
  for (long i = 0; i < z.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(a.rows()));
    for (long k = 0; k < a.rows(); ++k) {
      double dot = 0.0, nz = 0.0, na = 0.0;
      for (long j = 0; j < z.cols(); ++j) {
        dot += z(i, j) * a(k, j);
        nz += z(i, j) * z(i, j);
        na += a(k, j) * a(k, j);
      }
      row[static_cast<std::size_t>(k)] = gamma(i) == 0.0 ? 0.0 : dot / (std::sqrt(nz) * std::sqrt(na));
    }
    const auto p = softmax(row);
    for (long k = 0; k < a.rows(); ++k) s(i, k) = p[static_cast<std::size_t>(k)];
  }
  return s;
}

struct AttentionWeights {
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
};

// Multi-head attention over instances; keys with gamma 0 are skipped.
inline Matrix masked_attention(const Matrix& g, const Vector& gamma, const AttentionWeights& w, int heads) {
  const long n = g.rows();
  const long d = g.cols();
  const long dh = d / heads;
  const Matrix q = affine(g, w.wq, w.bq);
  const Matrix k = affine(g, w.wk, w.bk);
  const Matrix v = affine(g, w.wv, w.bv);
  Matrix cat = Matrix::Zero(n, d);
  for (int h = 0; h < heads; ++h) {
    for (long i = 0; i < n; ++i) {
      std::vector<double> logits;
      std::vector<long> keys;
      for (long j = 0; j < n; ++j) {
        if (gamma(j) == 0.0) continue;
        double s = 0.0;
        for (long c = h * dh; c < (h + 1) * dh; ++c) s += q(i, c) * k(j, c);
        logits.push_back(s / std::sqrt(static_cast<double>(dh)));
        keys.push_back(j);
      }
      const auto p = softmax(logits);
      for (long c = h * dh; c < (h + 1) * dh; ++c) {
        double s = 0.0;
        for (std::size_t t = 0; t < keys.size(); ++t) s += p[t] * v(keys[t], c);
        cat(i, c) = s;
      }
    }
  }
  return affine(cat, w.wo, w.bo);
}

// F = [w_a Z_a, w_t Z_t, w_v Z_v] per row.
inline Matrix weighted_concat(const std::array<Matrix, 3>& z, const Matrix& weights) {
  const long n = z[0].rows();
  const long d = z[0].cols();
  Matrix f(n, 3 * d);
  for (long i = 0; i < n; ++i) {
    for (int u = 0; u < 3; ++u) {
      for (long j = 0; j < d; ++j) f(i, u * d + j) = weights(i, u) * z[u](i, j);
    }
  }
  return f;
}

// GeLU MLP: gelu(x W1 + b1) W2 + b2.
inline Matrix mlp(const Matrix& x, const Matrix& w1, const Matrix& b1, const Matrix& w2, const Matrix& b2) {
  Matrix h = affine(x, w1, b1);
  for (long i = 0; i < h.rows(); ++i) {
    for (long j = 0; j < h.cols(); ++j) h(i, j) = gelu(h(i, j));
  }
  return affine(h, w2, b2);
}

}  // namespace oracle
