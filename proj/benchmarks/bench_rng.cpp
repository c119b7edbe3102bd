// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <benchmark/benchmark.h>

#include "nastar/rng.hpp"

namespace {

void BM_NextU64(benchmark::State& state) {
  nastar::Rng rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rng.next_u64());
  }
}
BENCHMARK(BM_NextU64);

void BM_Uniform(benchmark::State& state) {
  nastar::Rng rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rng.uniform());
  }
}
BENCHMARK(BM_Uniform);

void BM_Normal(benchmark::State& state) {
  nastar::Rng rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rng.normal());
  }
}
BENCHMARK(BM_Normal);

}  // namespace

BENCHMARK_MAIN();
