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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "comp/autograd.hpp"
#include "comp/rng.hpp"

namespace comp {

enum class Modality : int { kAudio = 0, kText = 1, kVideo = 2 };

inline constexpr int kNumModalities = 3;
inline constexpr std::array<Modality, kNumModalities> kModalities = {
    Modality::kAudio, Modality::kText, Modality::kVideo};

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);
inline int index_of(Modality m) { return static_cast<int>(m); }

enum class Task { kClassification, kRegression };

std::string_view task_name(Task t);
Task parse_task(std::string_view name);

/// Features of one modality over a set of samples. gamma(i) is 1 when the
/// sample is observed, 0 when missing; x_hat is x with missing rows zeroed.
struct ModalityBatch {
  Modality modality = Modality::kAudio;
  Matrix x;
  Vector gamma;
  Matrix x_hat;
};

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct MissingMask {
  MaskMatrix gamma_all;  // [n_samples x num_modalities], 1 = observed
  double mr = 0.0;
  std::uint64_t seed = 0;

  int n_samples() const { return static_cast<int>(gamma_all.rows()); }
  int num_modalities() const { return static_cast<int>(gamma_all.cols()); }
  long missing_count() const;
  Vector gamma(int modality) const;
};

struct LabelSet {
  Task task = Task::kClassification;
  std::vector<int> classes;  // classification
  Vector scores;             // regression, in [-3, 3]
  int num_classes = 0;

  int size() const;
};

struct ModalitySpec {
  Modality modality;
  int dim;
  double snr;  // signal variance / noise variance; +inf means noiseless
};

struct SyntheticSpec {
  std::string name = "synthetic";
  int n_samples = 600;
  int num_classes = 2;
  int latent_dim = 8;
  double class_sep = 4.0;
  Task task = Task::kClassification;
  std::vector<ModalitySpec> modalities = {
      {Modality::kAudio, 4, 4.0}, {Modality::kText, 4, 1.0}, {Modality::kVideo, 4, 0.25}};
  std::uint64_t seed = 0;
};

struct Dataset {
  std::string name;
  std::vector<ModalityBatch> modalities;
  LabelSet labels;
  std::optional<MissingMask> mask;

  int n_samples() const { return labels.size(); }
  std::vector<int> dims() const;
};

/// Largest feasible MR when every sample keeps one observed modality.
double max_feasible_mr(int num_modalities);

/// Exactly round(mr * m * n) cells set to 0, every row keeps at least one 1.
/// Throws InfeasibleMissingRate when mr is outside [0, (m-1)/m].
MissingMask make_missing_mask(int n_samples, int num_modalities, double mr, std::uint64_t seed);

ModalityBatch zero_impute(ModalityBatch batch);

/// Sets gamma/x_hat of every modality from `mask` and stores the mask.
void apply_mask(Dataset& dataset, const MissingMask& mask);

Dataset generate_synthetic(const SyntheticSpec& spec);

/// Directory format: manifest.json + one f32le file per modality + labels
/// text file + optional mask file. Returns the manifest written.
nlohmann::json write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

/// Row-major little-endian f32 payload of a dataset modality file.
void write_f32le_matrix(const std::filesystem::path& file, const Matrix& m);
Matrix read_f32le_matrix(const std::filesystem::path& file, long rows, long cols);

void write_mask_file(const std::filesystem::path& file, const MissingMask& mask);
MaskMatrix read_mask_file(const std::filesystem::path& file, int n_samples, int num_modalities);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Random disjoint split; both lists sorted ascending.
Split make_split(int n_samples, double test_fraction, Rng rng);

/// Fixed-size batch. Rows past indices.size() are padding: gamma 0 in every
/// modality and valid 0, so they drop out of every loss and metric.
struct Batch {
  std::vector<std::size_t> indices;
  std::array<Matrix, kNumModalities> x_hat;
  std::array<Vector, kNumModalities> gamma;
  Vector valid;
  std::vector<int> classes;
  Vector scores;

  int size() const { return static_cast<int>(valid.size()); }
  int real_size() const { return static_cast<int>(indices.size()); }
};

Batch assemble_batch(const Dataset& dataset, const MissingMask& mask,
                     std::span<const std::size_t> indices, int batch_n);

/// Chunks `indices` into groups of at most batch_n, shuffled when rng given.
std::vector<std::vector<std::size_t>> chunk_indices(std::vector<std::size_t> indices,
                                                    int batch_n, Rng* shuffle);

}  // namespace comp
