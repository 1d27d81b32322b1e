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

#include <fstream>

#include "comp/error.hpp"
#include "comp/harness.hpp"
#include "frozen_expected.hpp"
#include "test_util.hpp"

using namespace comp;

namespace {

// Confusion-matrix oracle, written independently of compute_metrics.
Metrics oracle_metrics(const std::vector<int>& pred, const std::vector<int>& y, int k) {
  Matrix cm = Matrix::Zero(k, k);
  for (std::size_t i = 0; i < y.size(); ++i) cm(y[i], pred[i]) += 1.0;
  Metrics m;
  m.acc = cm.trace() / cm.sum();
  int present = 0;
  for (int c = 0; c < k; ++c) {
    const double support = cm.row(c).sum();
    if (support == 0.0) continue;
    ++present;
    const double recall = cm(c, c) / support;
    const double predicted = cm.col(c).sum();
    const double precision = predicted > 0.0 ? cm(c, c) / predicted : 0.0;
    m.ua += recall;
    if (precision + recall > 0.0) m.f1 += support / cm.sum() * 2.0 * precision * recall / (precision + recall);
  }
  m.ua /= present;
  return m;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.model = testing::small_model();
  cfg.train.batch_n = 16;
  cfg.train.epochs_stage1 = 2;
  cfg.train.epochs_stage2 = 2;
  cfg.synthetic.n_samples = 64;
  return cfg;
}

}  // namespace

TEST_CASE("metric closed forms") {
  // Confusion [[1,1],[0,2]].
  const std::vector<int> y{0, 0, 1, 1};
  const std::vector<int> p{0, 1, 1, 1};
  const auto m = compute_metrics(p, y, 2);
  CHECK(m.acc == 0.75);
  CHECK(m.ua == 0.75);

  const auto perfect = compute_metrics(y, y, 2);
  CHECK(perfect.acc == 1.0);
  CHECK(perfect.ua == 1.0);
  CHECK(perfect.f1 == 1.0);

  const auto f1 = compute_metrics(std::vector<int>{0, 1, 1, 1, 0}, std::vector<int>{0, 0, 1, 1, 1}, 2).f1;
  CHECK(f1 == doctest::Approx(static_cast<double>(frozen::kWeightedF1Num) / frozen::kWeightedF1Den).epsilon(1e-15));
}

TEST_CASE("absent classes are left out of UA") {
  const auto m = compute_metrics(std::vector<int>{0, 0, 2}, std::vector<int>{0, 0, 0}, 3);
  CHECK(m.ua == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(compute_metrics(std::vector<int>{0}, std::vector<int>{0, 1}, 2), ValidationError);
  CHECK_THROWS_AS(compute_metrics(std::vector<int>{3}, std::vector<int>{0}, 2), ValidationError);
}

TEST_CASE("metrics property: agreement with the oracle, balanced binary ACC equals UA") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + static_cast<int>(rng.index(4));
    const std::size_t n = 1 + rng.index(40);
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
      p[i] = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
    }
    const auto got = compute_metrics(p, y, k);
    const auto want = oracle_metrics(p, y, k);
    CHECK(got.acc == doctest::Approx(want.acc).epsilon(1e-12));
    CHECK(got.ua == doctest::Approx(want.ua).epsilon(1e-12));
    CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-12));
    for (double v : {got.acc, got.ua, got.f1}) CHECK((v >= 0.0 && v <= 1.0));

    std::vector<int> yb(2 * n), pb(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) {
      yb[i] = i < n ? 0 : 1;
      pb[i] = static_cast<int>(rng.index(2));
    }
    const auto bal = compute_metrics(pb, yb, 2);
    CHECK(bal.acc == doctest::Approx(bal.ua).epsilon(1e-15));
  }
}

TEST_CASE("binarization rules") {
  const std::vector<double> s{-0.5, 0.0, 0.7};
  CHECK(binarize(s, BinarizeRule::kNegativeVsNonNegative) == std::vector<int>{0, 1, 1});
  CHECK(binarize(s, BinarizeRule::kNegativeVsPositiveStrict) == std::vector<int>{0, 0, 1});
}

TEST_CASE("embedding export") {
  testing::TempDir tmp("export");
  const auto ds = testing::small_dataset(40);
  const auto mask = make_missing_mask(40, 3, 0.3, 1);
  ComPModel model(testing::small_model(), shape_for(ds, 16), Rng(2));
  std::vector<std::size_t> idx(40);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  const auto f = export_embeddings(model, ds, mask, idx, EmbeddingKind::kF, Ablation::all_on(), tmp.path() / "F");
  REQUIRE(f["modalities"].size() == 1);
  CHECK(f["modalities"][0]["dim"] == 3 * 16);
  CHECK(f["n_samples"] == 40);
  CHECK(f["embedding"] == "F");
  const Matrix fused = read_f32le_matrix(tmp.path() / "F" / "F.f32", 40, 3 * 16);
  CHECK(fused.allFinite());

  export_embeddings(model, ds, mask, idx, EmbeddingKind::kZ, Ablation::all_on(), tmp.path() / "Z");
  export_embeddings(model, ds, mask, idx, EmbeddingKind::kZBar, Ablation::all_on(), tmp.path() / "Zbar");
  const auto z = read_dataset(tmp.path() / "Z");
  const auto zbar = read_dataset(tmp.path() / "Zbar");
  CHECK(z.n_samples() == zbar.n_samples());
  CHECK(z.modalities[0].x != zbar.modalities[0].x);
  REQUIRE(z.mask.has_value());
  CHECK(z.mask->gamma_all == mask.gamma_all);
  CHECK(z.labels.classes == ds.labels.classes);
  CHECK_THROWS_AS(parse_embedding_kind("W"), ValidationError);
}

TEST_CASE("run reports are reproducible and complete") {
  testing::TempDir tmp("run");
  const auto cfg = tiny_experiment();
  const auto ds = load_dataset(cfg);
  RunOptions ro;
  ro.out_dir = tmp.path() / "a";
  const auto a = run_experiment(ds, cfg, ro);
  const auto b = run_experiment(ds, cfg);
  CHECK(to_json(a) == to_json(b));
  CHECK(a.seed == cfg.train.seed);
  CHECK(a.stage1_modality_acc.has_value());
  CHECK(a.epoch_curves.size() == 4);
  for (const char* f : {"config.json", "mask.txt", "train_log.jsonl", "stage1.ckpt", "model.ckpt", "report.json"}) {
    CHECK(std::filesystem::exists(ro.out_dir / f));
  }
  const auto j = nlohmann::json::parse(std::ifstream(ro.out_dir / "config.json"));
  CHECK(experiment_config_from_json([&] {
          auto c = j;
          c.erase("stage");
          return c;
        }()).model.d == cfg.model.d);
  CHECK(to_json(run_report_from_json(to_json(a))) == to_json(a));

  // Stage 2 resumed from the stage-1 checkpoint reproduces the full run.
  RunOptions s2;
  s2.stage = "2";
  s2.init_checkpoint = ro.out_dir / "stage1.ckpt";
  const auto resumed = run_experiment(ds, cfg, s2);
  CHECK(resumed.metrics.acc == a.metrics.acc);
  CHECK(resumed.per_modality_acc == a.per_modality_acc);

  RunOptions bad;
  bad.stage = "2";
  CHECK_THROWS_AS(run_experiment(ds, cfg, bad), ValidationError);
}

TEST_CASE("sweep and ablation grids") {
  testing::TempDir tmp("grid");
  const auto cfg = tiny_experiment();
  const auto ds = load_dataset(cfg);

  GridOptions go;
  go.out_dir = tmp.path() / "sweep";
  go.jobs = 2;
  const auto sweep = mr_sweep(ds, cfg, {0.0, 0.7}, {0, 1}, go);
  CHECK(sweep.reports.size() == 4);
  CHECK(sweep.summary.size() == 2);
  CHECK(sweep.reports[0].effective_mr == 0.0);
  CHECK(sweep.reports[2].mr == 0.7);
  CHECK(sweep.reports[2].effective_mr == doctest::Approx(2.0 / 3.0).epsilon(1e-3));
  CHECK(sweep.summary[0].seeds == 2);
  CHECK(sweep.summary[0].metrics.acc ==
        doctest::Approx((sweep.reports[0].metrics.acc + sweep.reports[1].metrics.acc) / 2));
  for (const char* f : {"runs.csv", "table.md", "curves.csv", "coordinator_weights.csv"}) {
    CHECK(std::filesystem::exists(go.out_dir / f));
  }
  // Threads do not change results.
  const auto serial = mr_sweep(ds, cfg, {0.0}, {1});
  CHECK(to_json(serial.reports[0]) == to_json(sweep.reports[1]));

  std::ifstream csv(go.out_dir / "runs.csv");
  int lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  CHECK(lines == 1 + 4 + 2);
  CHECK(collect_reports(go.out_dir).size() == 4);

  auto rows = ablation_table_rows();
  CHECK(rows.size() == 8);
  CHECK(rows.front() == Ablation::all_off());
  CHECK(rows.back() == Ablation::all_on());
  const auto grid = ablation_grid(ds, cfg, {Ablation::all_off(), Ablation::all_on(), Ablation::all_off()}, {0});
  CHECK(grid.reports.size() == 2);
  CHECK(grid.reports[0].coordinator_weight_means == std::array<double, 3>{1.0, 1.0, 1.0});
}

TEST_CASE("MR list parsing") {
  const auto r = parse_mr_list("0.1:0.7:0.1");
  REQUIRE(r.size() == 7);
  CHECK(r.front() == 0.1);
  CHECK(r.back() == 0.7);
  CHECK(parse_mr_list("0.1,0.5") == std::vector<double>{0.1, 0.5});
  CHECK_THROWS_AS(parse_mr_list("0.1:x:0.1"), ValidationError);
  CHECK_THROWS_AS(parse_mr_list("0.5:0.1:0.1"), ValidationError);
}
