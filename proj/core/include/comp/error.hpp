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

#include <stdexcept>
#include <string>

namespace comp {

// Bad input: shapes, ranges, flags. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

class InfeasibleMissingRate : public ValidationError {
 public:
  explicit InfeasibleMissingRate(const std::string& detail)
      : ValidationError("infeasible missing rate: " + detail) {}
};

class CorruptDataset : public ValidationError {
 public:
  explicit CorruptDataset(const std::string& detail)
      : ValidationError("corrupt dataset: " + detail) {}
};

// Failures during a run (divergence, I/O). Maps to CLI exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace comp
