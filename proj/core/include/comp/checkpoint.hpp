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

#include <filesystem>

#include <nlohmann/json.hpp>

#include "comp/model.hpp"

namespace comp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Archive layout: "COMPCKPT", u32 version, u64 header length, JSON header
/// (version, modality order, model shape and config, run config, seed, and
/// the tensor index), then every tensor as row-major little-endian f64 in
/// index order.
void save_checkpoint(const std::filesystem::path& file, const ComPModel& model,
                     const nlohmann::json& run_config, std::uint64_t seed);

struct LoadedCheckpoint {
  ComPModel model;
  nlohmann::json run_config;
  std::uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file);

/// Copies stored tensors into an existing model; shape and names must match.
void load_parameters_into(const std::filesystem::path& file, ComPModel& model);

}  // namespace comp
