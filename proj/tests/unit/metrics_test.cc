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

#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "kvsched/metrics.h"
#include "kvsched/rng.h"

namespace kvsched {
namespace {

using std::chrono::milliseconds;

SimTime at_ms(std::int64_t ms) { return at_us(ms * 1000); }

RequestOutcome outcome(std::uint64_t id, std::int64_t arrival_ms,
                       std::vector<std::int64_t> tokens_ms, std::int64_t slo_ttft_ms,
                       std::int64_t slo_tbt_ms) {
  RequestOutcome o;
  o.id = RequestId{id};
  o.arrival = at_ms(arrival_ms);
  o.prompt_len = 8;
  o.output_len = static_cast<Tokens>(tokens_ms.size());
  o.slo_ttft = milliseconds(slo_ttft_ms);
  o.slo_tbt = milliseconds(slo_tbt_ms);
  for (auto t : tokens_ms) o.token_times.push_back(at_ms(t));
  o.first_scheduled_at = o.arrival;
  o.completed_at = o.token_times.back();
  return o;
}

TEST(Percentiles, NearestRank) {
  std::vector<Duration> v;
  for (int i = 1; i <= 100; ++i) v.push_back(milliseconds(i));
  const Percentiles p = percentiles(v);
  EXPECT_EQ(p.p50, milliseconds(50));
  EXPECT_EQ(p.p90, milliseconds(90));
  EXPECT_EQ(p.p99, milliseconds(99));
  EXPECT_EQ(p.max, milliseconds(100));
  const Percentiles one = percentiles({milliseconds(7)});
  EXPECT_EQ(one.p50, milliseconds(7));
  EXPECT_EQ(one.p99, milliseconds(7));
  EXPECT_EQ(percentiles({}).max, Duration::zero());
}

TEST(Percentiles, Monotone) {
  Rng rng(3);
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<Duration> v;
    const auto n = rng.uniform_int(1, 300);
    for (std::int64_t i = 0; i < n; ++i) v.push_back(Duration{rng.uniform_int(0, 1'000'000)});
    const Percentiles p = percentiles(v);
    ASSERT_LE(p.p50, p.p90);
    ASSERT_LE(p.p90, p.p99);
    ASSERT_LE(p.p99, p.max);
  }
}

TEST(ComputeMetrics, TtftAndGaps) {
  const RequestOutcome o[] = {outcome(0, 0, {10, 20, 30}, 100, 100)};
  const MetricsReport m = compute_metrics(o, RunCounters{});
  EXPECT_EQ(m.ttft.p50, milliseconds(10));
  EXPECT_EQ(m.tbt.p50, milliseconds(10));
  EXPECT_EQ(m.tbt.max, milliseconds(10));
  EXPECT_DOUBLE_EQ(m.ttft_attainment, 1.0);
  EXPECT_DOUBLE_EQ(m.tbt_attainment, 1.0);
}

TEST(ComputeMetrics, OneSlowGapFailsTbt) {
  const RequestOutcome o[] = {outcome(0, 0, {10, 20, 320, 330}, 100, 200),
                              outcome(1, 0, {10, 20, 30}, 100, 200)};
  const MetricsReport m = compute_metrics(o, RunCounters{});
  EXPECT_DOUBLE_EQ(m.tbt_attainment, 0.5);
  EXPECT_EQ(m.tbt.max, milliseconds(300));
}

TEST(ComputeMetrics, TtftBoundaryIsMet) {
  const RequestOutcome o[] = {outcome(0, 0, {100, 110}, 100, 50),
                              outcome(1, 0, {101, 110}, 100, 50)};
  EXPECT_DOUBLE_EQ(compute_metrics(o, RunCounters{}).ttft_attainment, 0.5);
}

TEST(ComputeMetrics, NormalizedLatency) {
  std::vector<std::int64_t> tokens;
  for (int i = 1; i <= 100; ++i) tokens.push_back(i * 10);
  const RequestOutcome o[] = {outcome(0, 0, tokens, 1000, 1000)};
  const MetricsReport m = compute_metrics(o, RunCounters{});
  EXPECT_DOUBLE_EQ(m.normalized_latency_mean_ms, 10.0);
  EXPECT_DOUBLE_EQ(m.latency_mean_ms, 1000.0);
}

TEST(ComputeMetrics, IncompleteCountsAsMissAndLeavesPercentiles) {
  RequestOutcome stuck = outcome(1, 0, {5000}, 100, 100);
  stuck.completed_at.reset();
  const RequestOutcome o[] = {outcome(0, 0, {10, 20}, 100, 100), stuck};
  const MetricsReport m = compute_metrics(o, RunCounters{});
  EXPECT_EQ(m.incomplete, 1);
  EXPECT_EQ(m.completed, 1);
  EXPECT_DOUBLE_EQ(m.ttft_attainment, 0.5);
  EXPECT_DOUBLE_EQ(m.tbt_attainment, 0.5);
  EXPECT_EQ(m.ttft.max, milliseconds(10));
}

TEST(ComputeMetrics, LatencyDecomposition) {
  RequestOutcome o = outcome(0, 0, {100, 200, 400}, 1000, 1000);
  o.first_scheduled_at = at_ms(60);
  o.preemption_time = milliseconds(150);
  o.preemption_count = 1;
  const RequestOutcome all[] = {o};
  const MetricsReport m = compute_metrics(all, RunCounters{});
  EXPECT_DOUBLE_EQ(m.waiting_time_mean_ms, 60.0);
  EXPECT_DOUBLE_EQ(m.preemption_time_mean_ms, 150.0);
  EXPECT_DOUBLE_EQ(m.execution_time_mean_ms, 400.0 - 60.0 - 150.0);
  EXPECT_EQ(m.preemption_count, 1);
  EXPECT_EQ(m.preemption_time_mean, milliseconds(150));
}

TEST(ComputeMetrics, EmptyInputGivesEmptyReport) {
  const MetricsReport m = compute_metrics({}, RunCounters{});
  EXPECT_EQ(m.requests, 0);
  EXPECT_EQ(m.preemption_count, 0);
  EXPECT_DOUBLE_EQ(m.ttft_attainment, 0.0);
  EXPECT_DOUBLE_EQ(m.throughput_rps, 0.0);
}

TEST(ComputeMetrics, CountersFeedMeans) {
  RunCounters c;
  c.samples = 4;
  c.kvc_utilization_sum = 2.0;
  c.fragmentation_sum = 0.4;
  c.iterations = 9;
  c.collisions = 2;
  const MetricsReport m = compute_metrics({}, c);
  EXPECT_DOUBLE_EQ(m.kvc_utilization_mean, 0.5);
  EXPECT_DOUBLE_EQ(m.fragmentation_mean, 0.1);
  EXPECT_EQ(m.iterations, 9);
  EXPECT_EQ(m.collisions, 2);
}

TEST(ComputeMetrics, AttainmentsStayInUnitInterval) {
  Rng rng(8);
  std::vector<RequestOutcome> v;
  for (std::uint64_t i = 0; i < 200; ++i) {
    std::vector<std::int64_t> t;
    std::int64_t now = rng.uniform_int(0, 100);
    const std::int64_t arrival = now;
    for (int k = 0; k < rng.uniform_int(1, 20); ++k) {
      now += rng.uniform_int(1, 80);
      t.push_back(now);
    }
    v.push_back(outcome(i, arrival, t, rng.uniform_int(1, 100), rng.uniform_int(1, 100)));
  }
  const MetricsReport m = compute_metrics(v, RunCounters{});
  EXPECT_GE(m.ttft_attainment, 0.0);
  EXPECT_LE(m.ttft_attainment, 1.0);
  EXPECT_GE(m.tbt_attainment, 0.0);
  EXPECT_LE(m.tbt_attainment, 1.0);
  EXPECT_LE(m.ttft.p50, m.ttft.p99);
}

TEST(Report, JsonAndCsvAgree) {
  const RequestOutcome o[] = {outcome(0, 0, {10, 20, 30}, 100, 100)};
  const MetricsReport m = compute_metrics(o, RunCounters{});
  const auto j = nlohmann::json::parse(to_json(m));
  EXPECT_EQ(j.at("requests").get<int>(), 1);
  std::size_t header_cols = 1;
  for (char ch : csv_header()) header_cols += ch == ',';
  std::size_t row_cols = 1;
  for (char ch : to_csv_row(m)) row_cols += ch == ',';
  EXPECT_EQ(header_cols, row_cols);
  EXPECT_EQ(csv_header().rfind("requests,", 0), 0u);
}

}  // namespace
}  // namespace kvsched
