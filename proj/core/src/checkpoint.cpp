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

#include "comp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "comp/error.hpp"

namespace comp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'O', 'M', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& out, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) out.put(static_cast<char>((value >> (8 * b)) & 0xFF));
}

template <typename T>
T get_le(std::istream& in) {
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    const int ch = in.get();
    if (ch == EOF) throw CorruptDataset("checkpoint truncated");
    value |= static_cast<T>(static_cast<unsigned char>(ch)) << (8 * b);
  }
  return value;
}

struct Archive {
  json header;
  std::map<std::string, Matrix> tensors;
};

Archive read_archive(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + file.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw CorruptDataset("not a checkpoint archive");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  Archive ar;
  ar.header = json::parse(header_text);
  for (const auto& t : ar.header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std::bit_cast<double>(get_le<std::uint64_t>(in));
    }
    ar.tensors.emplace(t.at("name").get<std::string>(), std::move(m));
  }
  return ar;
}

void assign(const Archive& ar, ComPModel& model) {
  for (auto& p : model.parameters()) {
    auto it = ar.tensors.find(p.name);
    if (it == ar.tensors.end()) throw ValidationError("checkpoint lacks tensor " + p.name);
    if (it->second.rows() != p.var.rows() || it->second.cols() != p.var.cols()) {
      throw ValidationError("checkpoint tensor " + p.name + " has incompatible shape");
    }
    p.var.mutable_value() = it->second;
  }
}

}  // namespace

void save_checkpoint(const fs::path& file, const ComPModel& model, const json& run_config, std::uint64_t seed) {
  const auto params = model.parameters();
  json header;
  header["version"] = kCheckpointVersion;
  header["modality_order"] = {"a", "t", "v"};
  header["shape"] = to_json(model.shape());
  header["model_config"] = to_json(model.config());
  header["config"] = run_config;
  header["seed"] = seed;
  header["tensors"] = json::array();
  for (const auto& p : params) {
    header["tensors"].push_back({{"name", p.name}, {"rows", p.var.rows()}, {"cols", p.var.cols()}});
  }
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write checkpoint " + file.string());
  const std::string text = header.dump();
  out.write(kMagic, 8);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    const Matrix& m = p.var.value();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(m(i, j)));
    }
  }
}

LoadedCheckpoint load_checkpoint(const fs::path& file) {
  Archive ar = read_archive(file);
  const auto order = ar.header.at("modality_order").get<std::vector<std::string>>();
  if (order != std::vector<std::string>{"a", "t", "v"}) {
    throw ValidationError("checkpoint modality order is not (a, t, v)");
  }
  ModelConfig config = model_config_from_json(ar.header.at("model_config"));
  ModelShape shape = model_shape_from_json(ar.header.at("shape"));
  const auto seed = ar.header.at("seed").get<std::uint64_t>();
  LoadedCheckpoint loaded{ComPModel(config, shape, Rng(seed)), ar.header.at("config"), seed};
  assign(ar, loaded.model);
  return loaded;
}

void load_parameters_into(const fs::path& file, ComPModel& model) {
  Archive ar = read_archive(file);
  if (model_shape_from_json(ar.header.at("shape")) != model.shape()) {
    throw ValidationError("checkpoint shape (dims, task, batch_n) does not match the model");
  }
  assign(ar, model);
}

}  // namespace comp
