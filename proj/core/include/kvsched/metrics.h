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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvsched/types.h"

namespace kvsched {

// Everything the metrics need about one request, as recorded by the engine.
struct RequestOutcome {
  RequestId id;
  SimTime arrival;
  Tokens prompt_len = 0;
  Tokens output_len = 0;  // true length
  Duration slo_ttft{0};
  Duration slo_tbt{0};
  std::vector<SimTime> token_times;
  std::optional<SimTime> first_scheduled_at;
  std::optional<SimTime> completed_at;
  int preemption_count = 0;
  Duration preemption_time{0};
};

// Engine-side counters that are not per request.
struct RunCounters {
  std::int64_t iterations = 0;
  std::int64_t collisions = 0;
  std::int64_t forced_violations = 0;
  double kvc_utilization_sum = 0.0;
  double fragmentation_sum = 0.0;
  std::int64_t samples = 0;
  SimTime end;
};

struct Percentiles {
  Duration p50{0};
  Duration p90{0};
  Duration p99{0};
  Duration max{0};
};

// Nearest-rank percentiles; all zero for an empty sample.
Percentiles percentiles(std::vector<Duration> samples);

struct MetricsReport {
  std::int64_t requests = 0;
  std::int64_t completed = 0;
  std::int64_t incomplete = 0;
  Percentiles ttft;
  Percentiles tbt;
  double ttft_attainment = 0.0;
  double tbt_attainment = 0.0;
  std::int64_t preemption_count = 0;
  // Per-request halted time, over all requests.
  Duration preemption_time_mean{0};
  Duration preemption_time_p99{0};
  double normalized_latency_mean_ms = 0.0;  // per output token
  double throughput_rps = 0.0;
  double kvc_utilization_mean = 0.0;
  double fragmentation_mean = 0.0;
  // Latency split for completed requests: waiting before first admission,
  // halted by preemption, and the rest.
  double latency_mean_ms = 0.0;
  double waiting_time_mean_ms = 0.0;
  double preemption_time_mean_ms = 0.0;
  double execution_time_mean_ms = 0.0;
  std::int64_t iterations = 0;
  std::int64_t collisions = 0;
  std::int64_t forced_violations = 0;
  double makespan_s = 0.0;
};

// Requests that never completed count as SLO misses and are left out of the
// latency percentiles and means.
MetricsReport compute_metrics(std::span<const RequestOutcome> outcomes,
                              const RunCounters& counters);

std::string to_json(const MetricsReport& m, int indent = 2);
std::string csv_header();
std::string to_csv_row(const MetricsReport& m);

}  // namespace kvsched
