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

#include <map>
#include <string>
#include <vector>

#include "comp/autograd.hpp"
#include "comp/rng.hpp"

namespace comp::nn {

using ag::Var;

struct NamedParameter {
  std::string name;  // modality/layer/name
  Var var;
};

using ParameterList = std::vector<NamedParameter>;

enum class Activation { kGelu, kIdentity };

/// y = x W + b, W [in x out], b [1 x out]. Uniform(-1/sqrt(in), 1/sqrt(in)) init.
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng);

  Var forward(const Var& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;

  int in_features() const { return static_cast<int>(weight_.rows()); }
  int out_features() const { return static_cast<int>(weight_.cols()); }
  Var& weight() { return weight_; }
  Var& bias() { return bias_; }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

  /// Test fixture: identity weights (in == out) and zero bias.
  void set_identity();

 private:
  Var weight_;
  Var bias_;
};

/// Linear -> activation -> Linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int in, int hidden, int out, Rng& rng, Activation act = Activation::kGelu);

  Var forward(const Var& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;

  Linear& first() { return first_; }
  Linear& second() { return second_; }
  const Linear& first() const { return first_; }
  const Linear& second() const { return second_; }
  void set_activation(Activation act) { act_ = act; }
  /// Test fixture: both layers identity and identity activation.
  void set_identity();

 private:
  Linear first_;
  Linear second_;
  Activation act_ = Activation::kGelu;
};

Var activate(const Var& x, Activation act);

/// Sum of squares of all parameter values; cheap init/round-trip checksum.
double checksum(const ParameterList& params);

enum class OptimizerKind { kSgd, kAdam };

/// First-order optimizer over a fixed parameter list. Gradient hooks run
/// between backward() and step() in the caller, so any optimizer composes
/// with them.
class Optimizer {
 public:
  Optimizer(ParameterList params, OptimizerKind kind, double lr);

  void zero_grad();
  void step();
  const ParameterList& parameters() const { return params_; }
  double learning_rate() const { return lr_; }

 private:
  ParameterList params_;
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long step_count_ = 0;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
};

}  // namespace comp::nn
