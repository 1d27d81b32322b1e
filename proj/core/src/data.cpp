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

#include "comp/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "comp/error.hpp"

namespace comp {

namespace fs = std::filesystem;

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kAudio: return "a";
    case Modality::kText: return "t";
    case Modality::kVideo: return "v";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  if (name == "a" || name == "audio") return Modality::kAudio;
  if (name == "t" || name == "text") return Modality::kText;
  if (name == "v" || name == "video") return Modality::kVideo;
  throw ValidationError("unknown modality '" + std::string(name) + "'");
}

std::string_view task_name(Task t) {
  return t == Task::kClassification ? "classification" : "regression";
}

Task parse_task(std::string_view name) {
  if (name == "classification") return Task::kClassification;
  if (name == "regression") return Task::kRegression;
  throw ValidationError("unknown task '" + std::string(name) + "'");
}

long MissingMask::missing_count() const {
  return static_cast<long>(gamma_all.size()) - gamma_all.cast<long>().sum();
}

Vector MissingMask::gamma(int modality) const {
  return gamma_all.col(modality).cast<double>();
}

int LabelSet::size() const {
  return task == Task::kClassification ? static_cast<int>(classes.size())
                                       : static_cast<int>(scores.size());
}

std::vector<int> Dataset::dims() const {
  std::vector<int> out;
  for (const auto& m : modalities) out.push_back(static_cast<int>(m.x.cols()));
  return out;
}

double max_feasible_mr(int num_modalities) {
  return static_cast<double>(num_modalities - 1) / static_cast<double>(num_modalities);
}

namespace {

// Multiset of row indices with rank lookup (Fenwick tree).
class RankSet {
 public:
  explicit RankSet(long n) : tree_(static_cast<std::size_t>(n) + 1, 0) {
    while ((high_ << 1) <= n) high_ <<= 1;
  }
  void add(long row, long delta) {
    if (delta == 0) return;
    size_ += delta;
    for (auto i = static_cast<std::size_t>(row) + 1; i < tree_.size(); i += i & (~i + 1)) tree_[i] += delta;
  }
  long size() const { return size_; }
  /// Row of the rank-th (0-based) member in increasing row order.
  long nth(long rank) const {
    std::size_t pos = 0;
    for (std::size_t step = static_cast<std::size_t>(high_); step > 0; step >>= 1) {
      if (pos + step < tree_.size() && tree_[pos + step] <= rank) {
        pos += step;
        rank -= tree_[pos];
      }
    }
    return static_cast<long>(pos);
  }

 private:
  std::vector<long> tree_;
  long size_ = 0;
  long high_ = 1;
};

}  // namespace

MissingMask make_missing_mask(int n_samples, int num_modalities, double mr, std::uint64_t seed) {
  if (n_samples < 1) throw ValidationError("make_missing_mask: n_samples must be >= 1");
  if (num_modalities < 1) throw ValidationError("make_missing_mask: need at least one modality");
  const double max_mr = max_feasible_mr(num_modalities);
  if (!(mr >= 0.0) || mr > max_mr + 1e-12) {
    std::ostringstream os;
    os << "mr=" << mr << " outside [0, " << max_mr << "] for " << num_modalities
       << " modalities (every sample must keep one observed modality)";
    throw InfeasibleMissingRate(os.str());
  }
  const long n = n_samples;
  const long m = num_modalities;
  const long cells = n * m;
  const long k = std::min(std::lround(mr * static_cast<double>(cells)), (m - 1) * n);

  Rng rng = Rng(seed).derive("missing-mask");
  std::vector<long> order(static_cast<std::size_t>(cells));
  std::iota(order.begin(), order.end(), 0L);
  // Partial Fisher-Yates: the first k cells are a uniform sample without replacement.
  for (long i = 0; i < k; ++i) {
    const long j = i + static_cast<long>(rng.index(static_cast<std::size_t>(cells - i)));
    std::swap(order[i], order[j]);
  }
  MaskMatrix gamma = MaskMatrix::Ones(n, m);
  for (long i = 0; i < k; ++i) gamma(order[i] / m, order[i] % m) = 0;

  // Rows with every modality observed are preferred donors, then any row
  // with two or more. Donors are drawn by rank in row order, so the counts
  // live in Fenwick trees to keep the repair O(n log n).
  std::vector<long> observed(static_cast<std::size_t>(n));
  for (long r = 0; r < n; ++r) observed[static_cast<std::size_t>(r)] = gamma.row(r).cast<long>().sum();
  RankSet full(n), multi(n);
  for (long r = 0; r < n; ++r) {
    if (observed[static_cast<std::size_t>(r)] == m) full.add(r, 1);
    if (observed[static_cast<std::size_t>(r)] >= 2) multi.add(r, 1);
  }
  auto set_observed = [&](long row, long count) {
    long& cur = observed[static_cast<std::size_t>(row)];
    full.add(row, (count == m) - (cur == m));
    multi.add(row, (count >= 2) - (cur >= 2));
    cur = count;
  };
  for (long i = 0; i < n; ++i) {
    if (observed[static_cast<std::size_t>(i)] > 0) continue;
    // Feasibility guarantees a donor with two observed entries exists.
    RankSet& pool = full.size() > 0 ? full : multi;
    const long donor = pool.nth(static_cast<long>(rng.index(static_cast<std::size_t>(pool.size()))));
    const long restore = static_cast<long>(rng.index(static_cast<std::size_t>(m)));
    std::vector<long> removable;
    for (long u = 0; u < m; ++u) {
      if (gamma(donor, u) == 1) removable.push_back(u);
    }
    const long remove = removable[rng.index(removable.size())];
    gamma(i, restore) = 1;
    gamma(donor, remove) = 0;
    set_observed(i, 1);
    set_observed(donor, observed[static_cast<std::size_t>(donor)] - 1);
  }
  return MissingMask{std::move(gamma), mr, seed};
}

ModalityBatch zero_impute(ModalityBatch batch) {
  if (batch.gamma.size() != batch.x.rows()) {
    throw ValidationError("zero_impute: gamma length does not match feature rows");
  }
  batch.x_hat = batch.gamma.asDiagonal() * batch.x;
  return batch;
}

void apply_mask(Dataset& dataset, const MissingMask& mask) {
  if (mask.n_samples() != dataset.n_samples() ||
      mask.num_modalities() != static_cast<int>(dataset.modalities.size())) {
    throw ValidationError("apply_mask: mask shape does not match dataset");
  }
  for (std::size_t u = 0; u < dataset.modalities.size(); ++u) {
    auto& mb = dataset.modalities[u];
    mb.gamma = mask.gamma(static_cast<int>(u));
    mb = zero_impute(std::move(mb));
  }
  dataset.mask = mask;
}

namespace {

double to_float_precision(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.latent_dim < 1) throw ValidationError("synthetic: latent_dim must be >= 1");
  if (spec.task == Task::kClassification && spec.num_classes < 2) {
    throw ValidationError("synthetic: num_classes must be >= 2");
  }
  if (spec.n_samples < 1) throw ValidationError("synthetic: n_samples must be >= 1");
  if (spec.modalities.empty()) throw ValidationError("synthetic: no modalities");
  for (const auto& ms : spec.modalities) {
    if (ms.dim < 1) throw ValidationError("synthetic: modality dim must be >= 1");
    if (!(ms.snr > 0.0)) throw ValidationError("synthetic: snr must be positive");
  }

  const Rng root(spec.seed);
  const int n = spec.n_samples;
  const int k = spec.latent_dim;
  Dataset ds;
  ds.name = spec.name;
  ds.labels.task = spec.task;

  // Latent codes: class means at scaled one-hot corners plus unit Gaussian.
  Matrix latent(n, k);
  Rng label_rng = root.derive("labels");
  Rng latent_rng = root.derive("latent");
  Matrix latent_cov = Matrix::Identity(k, k);
  if (spec.task == Task::kClassification) {
    ds.labels.num_classes = spec.num_classes;
    ds.labels.classes.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int y = static_cast<int>(label_rng.index(static_cast<std::size_t>(spec.num_classes)));
      ds.labels.classes[static_cast<std::size_t>(i)] = y;
      for (int j = 0; j < k; ++j) latent(i, j) = latent_rng.normal();
      latent(i, y % k) += spec.class_sep;
    }
    // Covariance of the class-mean mixture under uniform classes.
    Matrix means = Matrix::Zero(spec.num_classes, k);
    for (int c = 0; c < spec.num_classes; ++c) means(c, c % k) = spec.class_sep;
    const Eigen::RowVectorXd mu = means.colwise().mean();
    latent_cov += (means.transpose() * means) / spec.num_classes - mu.transpose() * mu;
  } else {
    ds.labels.scores.resize(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) latent(i, j) = latent_rng.normal();
      ds.labels.scores(i) = to_float_precision(3.0 * std::tanh(0.5 * spec.class_sep * latent(i, 0)));
    }
  }

  for (const auto& ms : spec.modalities) {
    const std::string tag(modality_name(ms.modality));
    Rng mix_rng = root.derive("mixing/" + tag);
    Rng noise_rng = root.derive("noise/" + tag);
    Matrix mixing(ms.dim, k);
    for (int r = 0; r < ms.dim; ++r) {
      for (int c = 0; c < k; ++c) mixing(r, c) = mix_rng.normal();
    }
    // Scale so the average per-feature signal variance is exactly 1.
    const double signal_var = (mixing * latent_cov * mixing.transpose()).trace() / ms.dim;
    mixing /= std::sqrt(signal_var);
    const double noise_std = std::isinf(ms.snr) ? 0.0 : 1.0 / std::sqrt(ms.snr);

    ModalityBatch mb;
    mb.modality = ms.modality;
    mb.x = latent * mixing.transpose();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < ms.dim; ++j) {
        const double noise = noise_rng.normal();
        mb.x(i, j) = to_float_precision(mb.x(i, j) + noise_std * noise);
      }
    }
    mb.gamma = Vector::Ones(n);
    mb.x_hat = mb.x;
    ds.modalities.push_back(std::move(mb));
  }
  return ds;
}

namespace {

void write_f32le(const fs::path& file, const Matrix& m) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + file.string());
  std::vector<char> buf(static_cast<std::size_t>(m.size()) * 4);
  std::size_t at = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m(i, j)));
      for (int b = 0; b < 4; ++b) buf[at++] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Matrix read_f32le(const fs::path& file, long rows, long cols) {
  if (!fs::exists(file)) throw CorruptDataset("missing payload " + file.filename().string());
  const auto bytes = static_cast<long>(fs::file_size(file));
  if (bytes != rows * cols * 4) {
    std::ostringstream os;
    os << file.filename().string() << " holds " << bytes << " bytes, manifest implies " << rows
       << "x" << cols << " f32 (" << rows * cols * 4 << " bytes)";
    throw CorruptDataset(os.str());
  }
  std::ifstream in(file, std::ios::binary);
  std::vector<unsigned char> buf(static_cast<std::size_t>(bytes));
  in.read(reinterpret_cast<char*>(buf.data()), bytes);
  Matrix m(rows, cols);
  std::size_t at = 0;
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < cols; ++j) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[at++]) << (8 * b);
      m(i, j) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return m;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_f32le_matrix(const fs::path& file, const Matrix& m) { write_f32le(file, m); }
Matrix read_f32le_matrix(const fs::path& file, long rows, long cols) { return read_f32le(file, rows, cols); }

void write_mask_file(const fs::path& file, const MissingMask& mask) {
  std::ofstream out(file);
  if (!out) throw RuntimeFailure("cannot write " + file.string());
  for (int i = 0; i < mask.n_samples(); ++i) {
    for (int u = 0; u < mask.num_modalities(); ++u) out << (mask.gamma_all(i, u) ? '1' : '0');
    out << '\n';
  }
}

MaskMatrix read_mask_file(const fs::path& file, int n_samples, int num_modalities) {
  std::ifstream in(file);
  if (!in) throw CorruptDataset("missing mask file " + file.filename().string());
  MaskMatrix gamma(n_samples, num_modalities);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row >= n_samples || static_cast<int>(line.size()) != num_modalities) {
      throw CorruptDataset("mask file shape does not match manifest");
    }
    for (int u = 0; u < num_modalities; ++u) {
      if (line[u] != '0' && line[u] != '1') throw CorruptDataset("mask file has non-binary entry");
      gamma(row, u) = line[u] == '1' ? 1 : 0;
    }
    ++row;
  }
  if (row != n_samples) throw CorruptDataset("mask file has wrong number of rows");
  return gamma;
}

nlohmann::json write_dataset(const fs::path& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["name"] = dataset.name;
  manifest["n_samples"] = dataset.n_samples();
  manifest["task"] = std::string(task_name(dataset.labels.task));
  if (dataset.labels.task == Task::kClassification) {
    manifest["num_classes"] = dataset.labels.num_classes;
  }
  manifest["modalities"] = nlohmann::json::array();
  for (const auto& mb : dataset.modalities) {
    const std::string name(modality_name(mb.modality));
    const std::string file = name + ".f32";
    write_f32le(dir / file, mb.x);
    manifest["modalities"].push_back(
        {{"name", name}, {"dim", mb.x.cols()}, {"dtype", "f32le"}, {"file", file}});
  }
  manifest["labels_file"] = "labels.txt";
  {
    std::ofstream out(dir / "labels.txt");
    for (int i = 0; i < dataset.n_samples(); ++i) {
      if (dataset.labels.task == Task::kClassification) {
        out << dataset.labels.classes[static_cast<std::size_t>(i)] << '\n';
      } else {
        out << format_double(dataset.labels.scores(i)) << '\n';
      }
    }
  }
  if (dataset.mask) {
    manifest["mask_file"] = "mask.txt";
    write_mask_file(dir / "mask.txt", *dataset.mask);
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  return manifest;
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw CorruptDataset("no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    std::ifstream(manifest_path) >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptDataset(std::string("manifest is not valid JSON: ") + e.what());
  }
  Dataset ds;
  try {
    ds.name = manifest.value("name", std::string("dataset"));
    const long n = manifest.at("n_samples").get<long>();
    if (n < 1) throw CorruptDataset("n_samples must be positive");
    ds.labels.task = parse_task(manifest.at("task").get<std::string>());
    if (ds.labels.task == Task::kClassification) {
      ds.labels.num_classes = manifest.at("num_classes").get<int>();
    }
    for (const auto& entry : manifest.at("modalities")) {
      if (entry.value("dtype", std::string("f32le")) != "f32le") {
        throw CorruptDataset("unsupported dtype " + entry.at("dtype").get<std::string>());
      }
      ModalityBatch mb;
      mb.modality = parse_modality(entry.at("name").get<std::string>());
      const long dim = entry.at("dim").get<long>();
      mb.x = read_f32le(dir / entry.at("file").get<std::string>(), n, dim);
      mb.gamma = Vector::Ones(n);
      mb.x_hat = mb.x;
      ds.modalities.push_back(std::move(mb));
    }
    std::ifstream labels(dir / manifest.at("labels_file").get<std::string>());
    if (!labels) throw CorruptDataset("missing labels file");
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(labels, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) rows.push_back(line);
    }
    if (static_cast<long>(rows.size()) != n) throw CorruptDataset("labels file row count mismatch");
    if (ds.labels.task == Task::kClassification) {
      for (const auto& r : rows) {
        const int y = std::stoi(r);
        if (y < 0 || y >= ds.labels.num_classes) throw CorruptDataset("class label out of range");
        ds.labels.classes.push_back(y);
      }
    } else {
      ds.labels.scores.resize(n);
      for (long i = 0; i < n; ++i) ds.labels.scores(i) = std::stod(rows[static_cast<std::size_t>(i)]);
    }
    if (manifest.contains("mask_file")) {
      MissingMask mask;
      mask.gamma_all = read_mask_file(dir / manifest["mask_file"].get<std::string>(),
                                      static_cast<int>(n), static_cast<int>(ds.modalities.size()));
      mask.mr = static_cast<double>(mask.missing_count()) / static_cast<double>(mask.gamma_all.size());
      apply_mask(ds, mask);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptDataset(std::string("manifest field error: ") + e.what());
  } catch (const std::invalid_argument& e) {
    if (dynamic_cast<const ValidationError*>(&e)) throw;
    throw CorruptDataset(std::string("unparsable label: ") + e.what());
  }
  return ds;
}

Split make_split(int n_samples, double test_fraction, Rng rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test_fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n_samples));
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * n_samples));
  Split split;
  split.test.assign(order.begin(), order.begin() + static_cast<long>(n_test));
  split.train.assign(order.begin() + static_cast<long>(n_test), order.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

Batch assemble_batch(const Dataset& dataset, const MissingMask& mask,
                     std::span<const std::size_t> indices, int batch_n) {
  if (static_cast<int>(indices.size()) > batch_n) throw ValidationError("batch larger than batch_n");
  if (static_cast<int>(dataset.modalities.size()) != kNumModalities) {
    throw ValidationError("model expects exactly three modalities (a, t, v)");
  }
  Batch b;
  b.indices.assign(indices.begin(), indices.end());
  b.valid = Vector::Zero(batch_n);
  b.classes.assign(static_cast<std::size_t>(batch_n), 0);
  b.scores = Vector::Zero(batch_n);
  for (int u = 0; u < kNumModalities; ++u) {
    const auto& mb = dataset.modalities[static_cast<std::size_t>(u)];
    b.x_hat[u] = Matrix::Zero(batch_n, mb.x.cols());
    b.gamma[u] = Vector::Zero(batch_n);
  }
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(indices[r]);
    const auto row = static_cast<Eigen::Index>(r);
    b.valid(row) = 1.0;
    if (dataset.labels.task == Task::kClassification) {
      b.classes[r] = dataset.labels.classes[static_cast<std::size_t>(i)];
    } else {
      b.scores(row) = dataset.labels.scores(i);
    }
    for (int u = 0; u < kNumModalities; ++u) {
      const auto& mb = dataset.modalities[static_cast<std::size_t>(u)];
      const double g = mask.gamma_all(i, u);
      b.gamma[u](row) = g;
      if (g != 0.0) b.x_hat[u].row(row) = mb.x.row(i);
    }
  }
  return b;
}

std::vector<std::vector<std::size_t>> chunk_indices(std::vector<std::size_t> indices, int batch_n,
                                                    Rng* shuffle) {
  if (batch_n < 1) throw ValidationError("batch_n must be >= 1");
  if (shuffle != nullptr) {
    for (std::size_t i = indices.size(); i > 1; --i) std::swap(indices[i - 1], indices[shuffle->index(i)]);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_n)) {
    const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch_n));
    out.emplace_back(indices.begin() + static_cast<long>(start), indices.begin() + static_cast<long>(end));
  }
  return out;
}

}  // namespace comp
