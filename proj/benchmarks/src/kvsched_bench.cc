/* Copyright 2026 The kvsched Authors. All Rights Reserved.

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

#include <vector>

#include <benchmark/benchmark.h>

#include "kvsched/engine.h"

namespace kvsched {
namespace {

void BM_AllocateRelease(benchmark::State& state) {
  const auto live = static_cast<std::uint64_t>(state.range(0));
  BlockPool pool(1 << 20, 8, 8);
  Rng rng(1);
  std::vector<Tokens> sizes;
  for (int i = 0; i < 1024; ++i) sizes.push_back(rng.uniform_int(16, 512));
  for (std::uint64_t i = 0; i < live; ++i) pool.allocate(RequestId{i}, sizes[i % sizes.size()]);
  std::uint64_t next = live;
  for (auto _ : state) {
    pool.release(RequestId{next - live});
    benchmark::DoNotOptimize(pool.allocate(RequestId{next}, sizes[next % sizes.size()]));
    ++next;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_AllocateRelease)->Arg(16)->Arg(256);

void BM_FindEmbeddingHost(benchmark::State& state) {
  Rng rng(2);
  std::vector<HostState> hosts;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    const Tokens granted = rng.uniform_int(200, 2000);
    hosts.push_back({RequestId{static_cast<std::uint64_t>(i)}, granted,
                     rng.uniform_int(10, granted / 2), 0, 0, 0});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(find_embedding_host(hosts, 40, 60, 16, 8));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FindEmbeddingHost)->Arg(8)->Arg(128);

void BM_Amortize(benchmark::State& state) {
  Rng rng(3);
  std::vector<AmortizeInput> reqs;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    reqs.push_back({RequestId{static_cast<std::uint64_t>(i)},
                    Duration{rng.uniform_int(1000, 5'000'000)}, rng.uniform_int(1, 2000),
                    Tokens{1} << 30});
  }
  for (auto _ : state) benchmark::DoNotOptimize(amortize(reqs, 4096));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Amortize)->Arg(4)->Arg(64);

void BM_OrderVictims(benchmark::State& state) {
  Rng rng(4);
  std::vector<VictimCandidate> running;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    running.push_back({RequestId{static_cast<std::uint64_t>(i)}, at_us(rng.uniform_int(0, 1000)),
                       std::chrono::milliseconds(rng.uniform_int(10, 3000)),
                       rng.uniform_int(0, 600), rng.uniform_int(16, 2048)});
  }
  const VictimBuckets buckets;
  for (auto _ : state) benchmark::DoNotOptimize(order_victims(running, buckets));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_OrderVictims)->Arg(16)->Arg(256);

void BM_SimulateAlpaca(benchmark::State& state) {
  SimConfig cfg;
  cfg.workload = preset_spec(Preset::kAlpaca);
  cfg.workload.count = 500;
  cfg.pool.capacity = 3072;
  cfg.scheduler.policy = static_cast<PolicyKind>(state.range(0));
  cfg.slo.baseline_ttft = std::chrono::milliseconds(300);
  cfg.slo.baseline_tbt = std::chrono::milliseconds(40);
  std::int64_t iterations = 0;
  for (auto _ : state) {
    const RunResult r = run(cfg);
    iterations += r.metrics.iterations;
  }
  state.SetLabel(std::string(to_string(cfg.scheduler.policy)));
  state.counters["sim_iterations"] =
      benchmark::Counter(static_cast<double>(iterations), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_SimulateAlpaca)
    ->DenseRange(0, 4)
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace kvsched

BENCHMARK_MAIN();
