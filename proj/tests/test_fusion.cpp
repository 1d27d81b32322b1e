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

#include <doctest.h>

#include <cmath>

#include "comp/fusion.hpp"
#include "loop_oracles.hpp"
#include "test_util.hpp"

using namespace comp;
using comp::ag::Var;

namespace {

std::array<Var, 3> constants(const std::array<Matrix, 3>& z) {
  return {ag::constant(z[0]), ag::constant(z[1]), ag::constant(z[2])};
}

}  // namespace

TEST_CASE("coordinator softmax closed forms") {
  Matrix omega(3, 3);
  omega << 0, 0, 0, std::log(2.0), 0, 0, 5, 5, 5;
  const Matrix w = ag::softmax_rows(ag::constant(omega)).value();
  for (int j = 0; j < 3; ++j) CHECK(w(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(w(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w(1, 1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w(2, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Rng rng(1);
  fusion::Coordinator coord(4, rng);
  const std::array<Matrix, 3> z{testing::random_matrix(rng, 5, 4), testing::random_matrix(rng, 5, 4),
                                testing::random_matrix(rng, 5, 4)};
  const auto cw = fusion::coordinator_weights(coord, constants(z));
  CHECK(cw.omega.cols() == 3);
  CHECK((cw.omega_bar.value() - ag::softmax_rows(cw.omega).value()).cwiseAbs().maxCoeff() == 0.0);
  const Matrix shifted = (cw.omega.value().array() + 7.0).matrix();
  CHECK((ag::softmax_rows(ag::constant(shifted)).value() - cw.omega_bar.value()).cwiseAbs().maxCoeff() < 1e-15);
  for (int i = 0; i < 5; ++i) CHECK(cw.omega_bar.value().row(i).sum() == doctest::Approx(1.0));
}

TEST_CASE("weighted concatenation") {
  Rng rng(2);
  const std::array<Matrix, 3> z{testing::random_matrix(rng, 2, 3), testing::random_matrix(rng, 2, 3),
                                testing::random_matrix(rng, 2, 3)};
  Matrix onehot = Matrix::Zero(2, 3);
  onehot.col(0).setOnes();
  const Matrix f = fusion::weighted_concat(constants(z), ag::constant(onehot)).value();
  CHECK(f.leftCols(3) == z[0]);
  CHECK(f.rightCols(6).isZero(0.0));

  // Doubling Z^a and halving its weight leaves F unchanged.
  Matrix w = testing::random_matrix(rng, 2, 3).cwiseAbs();
  Matrix w_half = w;
  w_half.col(0) *= 0.5;
  auto z2 = z;
  z2[0] *= 2.0;
  const Matrix f1 = fusion::weighted_concat(constants(z), ag::constant(w)).value();
  const Matrix f2 = fusion::weighted_concat(constants(z2), ag::constant(w_half)).value();
  CHECK((f1 - f2).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fuse_and_classify matches the loop oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const long n = 1 + static_cast<long>(rng.index(6));
    const int d = 1 + static_cast<int>(rng.index(8));
    const int k = 2 + static_cast<int>(rng.index(3));
    fusion::FusionClassifier clf(d, k, rng);
    const std::array<Matrix, 3> z{testing::random_matrix(rng, n, d), testing::random_matrix(rng, n, d),
                                  testing::random_matrix(rng, n, d)};
    const Matrix w = ag::softmax_rows(ag::constant(testing::random_matrix(rng, n, 3))).value();
    const auto out = fusion::fuse_and_classify(constants(z), ag::constant(w), clf);
    const Matrix f = oracle::weighted_concat(z, w);
    auto& l1 = clf.mlp().first();
    auto& l2 = clf.mlp().second();
    const Matrix logits =
        oracle::mlp(f, l1.weight().value(), l1.bias().value(), l2.weight().value(), l2.bias().value());
    CHECK((out.fused.value() - f).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((out.logits.value() - logits).cwiseAbs().maxCoeff() < 1e-6);
  }
  // No coordinator: plain concatenation.
  fusion::FusionClassifier clf(2, 2, rng);
  const std::array<Matrix, 3> z{Matrix::Ones(1, 2), Matrix::Ones(1, 2) * 2, Matrix::Ones(1, 2) * 3};
  const auto out = fusion::fuse_and_classify(constants(z), Var(), clf);
  CHECK(out.fused.value() == (Matrix(1, 6) << 1, 1, 2, 2, 3, 3).finished());
}

TEST_CASE("task loss closed forms") {
  fusion::TaskTargets cls;
  cls.classes = {0, 1};
  Matrix perfect(2, 2);
  perfect << 1, 0, 0, 1;
  CHECK(fusion::task_loss(ag::constant(perfect), cls, Vector::Ones(2), LossReduction::kMean).value()(0, 0) == 0.0);
  const Matrix half = Matrix::Constant(2, 2, 0.5);
  CHECK(fusion::task_loss(ag::constant(half), cls, Vector::Ones(2), LossReduction::kMean).value()(0, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // Probability 0 is clipped, not infinite.
  Matrix wrong(2, 2);
  wrong << 0, 1, 1, 0;
  CHECK(std::isfinite(fusion::task_loss(ag::constant(wrong), cls, Vector::Ones(2), LossReduction::kMean).value()(0, 0)));

  fusion::TaskTargets reg;
  reg.task = Task::kRegression;
  reg.scores = (Vector(2) << 1, 2).finished();
  const Matrix pred = (Matrix(2, 1) << 0, 2).finished();
  CHECK(fusion::task_loss(ag::constant(pred), reg, Vector::Ones(2), LossReduction::kMean).value()(0, 0) == 0.5);
  CHECK(fusion::task_loss(ag::constant(pred), reg, Vector::Ones(2), LossReduction::kSum).value()(0, 0) == 1.0);
  CHECK(fusion::task_loss(ag::constant((Matrix(2, 1) << 1, 2).finished()), reg, Vector::Ones(2),
                          LossReduction::kMean).value()(0, 0) == 0.0);
}

TEST_CASE("task loss gradients match finite differences") {
  Rng rng(4);
  auto logits = ag::parameter(testing::random_matrix(rng, 4, 3));
  fusion::TaskTargets cls;
  cls.classes = {2, 0, 1, 1};
  const Vector weights = (Vector(4) << 1, 1, 0, 1).finished();
  CHECK(testing::gradient_check({logits}, [&] {
          return fusion::task_loss(fusion::predictions_from_logits(logits, Task::kClassification), cls, weights,
                                   LossReduction::kMean);
        }) < 1e-4);

  auto scores = ag::parameter(testing::random_matrix(rng, 4, 1));
  fusion::TaskTargets reg;
  reg.task = Task::kRegression;
  reg.scores = testing::random_matrix(rng, 4, 1);
  CHECK(testing::gradient_check({scores}, [&] {
          return fusion::task_loss(scores, reg, weights, LossReduction::kSum);
        }) < 1e-4);
}
