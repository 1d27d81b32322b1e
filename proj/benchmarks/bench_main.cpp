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

#include <benchmark/benchmark.h>

#include <numeric>

#include "comp/data.hpp"
#include "comp/model.hpp"
#include "comp/training.hpp"

using namespace comp;

namespace {

void BM_MissingMask(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(make_missing_mask(n, 3, 0.5, seed++));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_MissingMask)->Arg(1000)->Arg(100000);

struct Setup {
  Dataset ds;
  MissingMask mask;
  Batch batch;
  ModelConfig cfg;

  explicit Setup(int batch_n, int blocks) {
    SyntheticSpec spec;
    spec.n_samples = batch_n;
    ds = generate_synthetic(spec);
    mask = make_missing_mask(batch_n, 3, 0.3, 1);
    std::vector<std::size_t> idx(static_cast<std::size_t>(batch_n));
    std::iota(idx.begin(), idx.end(), 0);
    batch = assemble_batch(ds, mask, idx, batch_n);
    cfg.d = 32;
    cfg.p = 8;
    cfg.c = 8;
    cfg.L = blocks;
  }
};

void BM_Forward(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  ComPModel model(s.cfg, shape_for(s.ds, s.batch.size()), Rng(0));
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(s.batch, Ablation::all_on(), nullptr));
}
BENCHMARK(BM_Forward)->Args({32, 1})->Args({32, 2})->Args({128, 2})->Unit(benchmark::kMicrosecond);

void BM_Stage2Step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Setup s(n, 2);
  ComPModel model(s.cfg, shape_for(s.ds, n), Rng(0));
  const Split split = make_split(n, 0.5, Rng(1));
  TrainConfig tc;
  tc.batch_n = n;
  Trainer trainer(model, s.ds, s.mask, split, tc, Rng(2));
  nn::Optimizer opt(model.stage2_parameters(false), nn::OptimizerKind::kAdam, 1e-3);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.stage2_step(opt, s.batch));
}
BENCHMARK(BM_Stage2Step)->Arg(32)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
