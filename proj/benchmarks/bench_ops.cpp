/* Copyright 2026 The dcss Authors. All Rights Reserved.

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

#include "dcss/ops.hpp"
#include "dcss/rng.hpp"

using namespace dcss;

namespace {

Tensor randn(std::vector<index_t> shape, std::uint64_t seed,
             bool requires_grad = false) {
  Rng rng(seed);
  Tensor t(std::move(shape), requires_grad);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const index_t c = state.range(0);
  Tensor x = randn({4, c, 16, 16}, 1);
  Tensor w = randn({c, c, 3, 3}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::conv2d(nullptr, x, w, 1, 1, 1));
  }
  state.SetItemsProcessed(state.iterations() * 4 * 16 * 16);
}
BENCHMARK(BM_Conv3x3Forward)->Arg(8)->Arg(32)->Arg(120);

void BM_Conv1x1Forward(benchmark::State& state) {
  const index_t c = state.range(0);
  Tensor x = randn({4, c, 16, 16}, 3);
  Tensor w = randn({c, c, 1, 1}, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::conv2d(nullptr, x, w, 1, 0, 1));
  }
}
BENCHMARK(BM_Conv1x1Forward)->Arg(8)->Arg(64);

void BM_DepthwiseForward(benchmark::State& state) {
  const index_t c = state.range(0);
  Tensor x = randn({4, c, 16, 16}, 5);
  Tensor w = randn({c, 1, 7, 7}, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ops::conv2d(nullptr, x, w, 1, 3, static_cast<int>(c)));
  }
}
BENCHMARK(BM_DepthwiseForward)->Arg(12)->Arg(96);

void BM_ConvForwardBackward(benchmark::State& state) {
  Tensor x = randn({4, 16, 16, 16}, 7, true);
  Tensor w = randn({16, 16, 3, 3}, 8, true);
  for (auto _ : state) {
    Tape tape;
    Tensor y = ops::conv2d(&tape, x, w, 1, 1, 1);
    Tensor loss = ops::sum(&tape, y);
    tape.backward(loss);
    x.zero_grad();
    w.zero_grad();
  }
}
BENCHMARK(BM_ConvForwardBackward);

void BM_BatchNormTraining(benchmark::State& state) {
  Tensor x = randn({8, 32, 16, 16}, 9);
  Tensor gamma = Tensor::full({32}, 1.0, true);
  Tensor beta({32}, true);
  Tensor rm({32}), rv = Tensor::full({32}, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        ops::batch_norm(nullptr, x, gamma, beta, rm, rv, true));
  }
}
BENCHMARK(BM_BatchNormTraining);

void BM_BilinearUpsample(benchmark::State& state) {
  Tensor x = randn({4, 16, 8, 8}, 10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::bilinear_upsample(nullptr, x, 4));
  }
}
BENCHMARK(BM_BilinearUpsample);

void BM_CrossEntropy(benchmark::State& state) {
  Tensor logits = randn({4, 5, 64, 64}, 11);
  LabelMap labels(4, 64, 64);
  Rng rng(12);
  for (auto& v : labels.v) v = static_cast<std::int32_t>(rng.below(5));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::cross_entropy(nullptr, logits, labels));
  }
}
BENCHMARK(BM_CrossEntropy);

}  // namespace

BENCHMARK_MAIN();
