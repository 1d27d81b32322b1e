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

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "comp/autograd.hpp"
#include "comp/config.hpp"
#include "comp/data.hpp"
#include "comp/rng.hpp"

namespace testing {

using comp::Matrix;
using comp::Vector;
using comp::ag::Var;

// sin(a*i + b*j + c): the closed-form fixtures shared with oracles/derive_expected.py.
inline Matrix fixture(int rows, int cols, double a, double b, double c) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = std::sin(a * i + b * j + c);
  }
  return m;
}

inline Matrix random_matrix(comp::Rng& rng, long rows, long cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / denom;
}

// Norm-wise relative error between backward() and central differences,
// taken over all leaves stacked into one vector. Per-leaf ratios blow up on
// leaves whose true gradient is exactly zero (e.g. key biases under softmax).
inline double gradient_check(std::vector<Var> leaves, const std::function<Var()>& loss, double step = 1e-5) {
  for (auto& leaf : leaves) leaf.zero_grad();
  comp::ag::backward(loss());
  double diff2 = 0.0, analytic2 = 0.0, numeric2 = 0.0;
  for (auto& leaf : leaves) {
    const Matrix analytic = leaf.grad();
    for (long i = 0; i < analytic.rows(); ++i) {
      for (long j = 0; j < analytic.cols(); ++j) {
        const double keep = leaf.value()(i, j);
        leaf.mutable_value()(i, j) = keep + step;
        const double up = loss().value()(0, 0);
        leaf.mutable_value()(i, j) = keep - step;
        const double down = loss().value()(0, 0);
        leaf.mutable_value()(i, j) = keep;
        const double numeric = (up - down) / (2.0 * step);
        diff2 += (analytic(i, j) - numeric) * (analytic(i, j) - numeric);
        analytic2 += analytic(i, j) * analytic(i, j);
        numeric2 += numeric * numeric;
      }
    }
  }
  return std::sqrt(diff2) / std::max(std::sqrt(analytic2) + std::sqrt(numeric2), 1e-12);
}

// Small enough to train in seconds, large enough to exercise every path.
inline comp::ModelConfig small_model() {
  comp::ModelConfig m;
  m.d = 16;
  m.p = 4;
  m.c = 4;
  m.L = 2;
  m.m_msa = 1;
  m.heads = 2;
  return m;
}

inline comp::Dataset small_dataset(int n = 96, std::uint64_t seed = 5) {
  comp::SyntheticSpec spec;
  spec.n_samples = n;
  spec.seed = seed;
  for (auto& m : spec.modalities) m.dim = 6;
  return comp::generate_synthetic(spec);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("comp-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
