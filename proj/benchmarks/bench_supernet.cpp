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

#include "dcss/decode.hpp"
#include "dcss/search.hpp"
#include "dcss/supernet.hpp"

using namespace dcss;

namespace {

Tensor random_images(index_t n, index_t hw, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, 3, hw, hw});
  for (auto& v : t.data()) v = rng.uniform();
  return t;
}

void BM_SupernetSampledForward(benchmark::State& state) {
  SupernetSpec spec;
  spec.num_layers = static_cast<int>(state.range(0));
  Supernet net(spec, 1);
  Tensor images = random_images(4, 64, 2);
  Rng paths(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        net.forward(nullptr, images, ForwardMode::kSampled, false, 1.0, &paths));
  }
}
BENCHMARK(BM_SupernetSampledForward)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_SupernetFullForward(benchmark::State& state) {
  SupernetSpec spec;
  spec.num_layers = static_cast<int>(state.range(0));
  Supernet net(spec, 4);
  Tensor images = random_images(4, 64, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        net.forward(nullptr, images, ForwardMode::kFull, false));
  }
}
BENCHMARK(BM_SupernetFullForward)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_SearchStep(benchmark::State& state) {
  SupernetSpec spec;
  spec.num_layers = static_cast<int>(state.range(0));
  SearchConfig cfg;
  cfg.batch_size = 4;
  SearchState search_state(spec, cfg);
  DatasetSpec dspec;
  dspec.count_train_a = 8;
  dspec.count_train_b = 8;
  dspec.count_val = 2;
  Dataset ds = generate_dataset(dspec);
  Batch a = stack_samples(ds.train_a, {0, 1, 2, 3});
  Batch b = stack_samples(ds.train_b, {0, 1, 2, 3});
  for (auto _ : state) {
    search_step(search_state, cfg, a, b, 1.0, 0.01);
  }
  state.SetLabel("alternating w + (alpha,beta) update");
}
BENCHMARK(BM_SearchStep)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_DecodeConnections(benchmark::State& state) {
  const int L = static_cast<int>(state.range(0));
  Rng rng(7);
  ArchParams p;
  p.num_layers = L;
  for (int l = 1; l <= L; ++l) {
    for (int s = 0; s < 4; ++s) {
      const NodeId id{s, l};
      p.alpha[id] = std::vector<double>(6, 0.0);
      std::vector<double> beta(static_cast<std::size_t>(in_degree(l)));
      for (auto& v : beta) v = rng.uniform(-1.0, 1.0);
      p.beta[id] = std::move(beta);
    }
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(decode_connections(p, false));
  }
}
BENCHMARK(BM_DecodeConnections)->Arg(4)->Arg(14);

}  // namespace

