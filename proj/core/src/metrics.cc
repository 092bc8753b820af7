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

#include "kvsched/metrics.h"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

namespace kvsched {

Percentiles percentiles(std::vector<Duration> samples) {
  Percentiles p;
  if (samples.empty()) return p;
  std::sort(samples.begin(), samples.end());
  auto rank = [&](double q) {
    const auto n = static_cast<double>(samples.size());
    const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(q * n)));
    return samples[k - 1];
  };
  p.p50 = rank(0.50);
  p.p90 = rank(0.90);
  p.p99 = rank(0.99);
  p.max = samples.back();
  return p;
}

MetricsReport compute_metrics(std::span<const RequestOutcome> outcomes,
                              const RunCounters& counters) {
  MetricsReport m;
  m.requests = static_cast<std::int64_t>(outcomes.size());
  m.iterations = counters.iterations;
  m.collisions = counters.collisions;
  m.forced_violations = counters.forced_violations;
  if (counters.samples > 0) {
    m.kvc_utilization_mean =
        counters.kvc_utilization_sum / static_cast<double>(counters.samples);
    m.fragmentation_mean =
        counters.fragmentation_sum / static_cast<double>(counters.samples);
  }
  if (outcomes.empty()) return m;

  std::vector<Duration> ttft;
  std::vector<Duration> tbt;
  std::vector<Duration> halted;
  std::int64_t ttft_ok = 0;
  std::int64_t tbt_ok = 0;
  double normalized = 0.0;
  double latency = 0.0;
  double waiting = 0.0;
  double preempted = 0.0;
  SimTime first_arrival = outcomes.front().arrival;
  SimTime last_completion = kSimEpoch;

  for (const auto& o : outcomes) {
    first_arrival = std::min(first_arrival, o.arrival);
    m.preemption_count += o.preemption_count;
    halted.push_back(o.preemption_time);
    if (!o.completed_at) {
      ++m.incomplete;
      continue;
    }
    ++m.completed;
    last_completion = std::max(last_completion, *o.completed_at);
    const Duration first = o.token_times.front() - o.arrival;
    ttft.push_back(first);
    if (first <= o.slo_ttft) ++ttft_ok;
    bool all_gaps_ok = true;
    for (std::size_t i = 1; i < o.token_times.size(); ++i) {
      const Duration gap = o.token_times[i] - o.token_times[i - 1];
      tbt.push_back(gap);
      if (gap > o.slo_tbt) all_gaps_ok = false;
    }
    if (all_gaps_ok) ++tbt_ok;
    const double e2e = to_ms(*o.completed_at - o.arrival);
    latency += e2e;
    normalized += e2e / static_cast<double>(o.output_len);
    const Duration wait = o.first_scheduled_at
                              ? *o.first_scheduled_at - o.arrival
                              : Duration::zero();
    waiting += to_ms(wait);
    preempted += to_ms(o.preemption_time);
  }

  const auto n = static_cast<double>(m.requests);
  m.ttft = percentiles(std::move(ttft));
  m.tbt = percentiles(std::move(tbt));
  m.ttft_attainment = static_cast<double>(ttft_ok) / n;
  m.tbt_attainment = static_cast<double>(tbt_ok) / n;
  Duration halted_total{0};
  for (Duration d : halted) halted_total += d;
  m.preemption_time_mean = halted_total / m.requests;
  m.preemption_time_p99 = percentiles(std::move(halted)).p99;
  if (m.completed > 0) {
    const auto c = static_cast<double>(m.completed);
    m.normalized_latency_mean_ms = normalized / c;
    m.latency_mean_ms = latency / c;
    m.waiting_time_mean_ms = waiting / c;
    m.preemption_time_mean_ms = preempted / c;
    m.execution_time_mean_ms = (latency - waiting - preempted) / c;
    const double span = to_seconds(last_completion - first_arrival);
    m.makespan_s = span;
    m.throughput_rps = span > 0.0 ? c / span : 0.0;
  }
  return m;
}

namespace {

nlohmann::ordered_json percentiles_json(const Percentiles& p) {
  return {{"p50_ms", to_ms(p.p50)},
          {"p90_ms", to_ms(p.p90)},
          {"p99_ms", to_ms(p.p99)},
          {"max_ms", to_ms(p.max)}};
}

}  // namespace

std::string to_json(const MetricsReport& m, int indent) {
  nlohmann::ordered_json j;
  j["requests"] = m.requests;
  j["completed"] = m.completed;
  j["incomplete"] = m.incomplete;
  j["ttft"] = percentiles_json(m.ttft);
  j["tbt"] = percentiles_json(m.tbt);
  j["ttft_attainment"] = m.ttft_attainment;
  j["tbt_attainment"] = m.tbt_attainment;
  j["preemption_count"] = m.preemption_count;
  j["preemption_time"] = {{"mean_ms", to_ms(m.preemption_time_mean)},
                          {"p99_ms", to_ms(m.preemption_time_p99)}};
  j["normalized_latency_mean_ms"] = m.normalized_latency_mean_ms;
  j["throughput_rps"] = m.throughput_rps;
  j["kvc_utilization_mean"] = m.kvc_utilization_mean;
  j["fragmentation_mean"] = m.fragmentation_mean;
  j["latency_mean_ms"] = m.latency_mean_ms;
  j["waiting_time_mean_ms"] = m.waiting_time_mean_ms;
  j["preemption_time_mean_ms"] = m.preemption_time_mean_ms;
  j["execution_time_mean_ms"] = m.execution_time_mean_ms;
  j["iterations"] = m.iterations;
  j["collisions"] = m.collisions;
  j["forced_violations"] = m.forced_violations;
  j["makespan_s"] = m.makespan_s;
  return j.dump(indent);
}

std::string csv_header() {
  return "requests,completed,incomplete,"
         "ttft_p50_ms,ttft_p90_ms,ttft_p99_ms,ttft_max_ms,"
         "tbt_p50_ms,tbt_p90_ms,tbt_p99_ms,tbt_max_ms,"
         "ttft_attainment,tbt_attainment,preemption_count,"
         "preemption_time_mean_ms,preemption_time_p99_ms,"
         "normalized_latency_mean_ms,throughput_rps,kvc_utilization_mean,"
         "fragmentation_mean,latency_mean_ms,waiting_time_mean_ms,"
         "execution_time_mean_ms,iterations,collisions,forced_violations,"
         "makespan_s";
}

std::string to_csv_row(const MetricsReport& m) {
  std::ostringstream os;
  os.precision(10);
  auto pct = [&](const Percentiles& p) {
    os << to_ms(p.p50) << ',' << to_ms(p.p90) << ',' << to_ms(p.p99) << ','
       << to_ms(p.max) << ',';
  };
  os << m.requests << ',' << m.completed << ',' << m.incomplete << ',';
  pct(m.ttft);
  pct(m.tbt);
  os << m.ttft_attainment << ',' << m.tbt_attainment << ','
     << m.preemption_count << ',' << to_ms(m.preemption_time_mean) << ','
     << to_ms(m.preemption_time_p99) << ',' << m.normalized_latency_mean_ms
     << ',' << m.throughput_rps << ',' << m.kvc_utilization_mean << ','
     << m.fragmentation_mean << ',' << m.latency_mean_ms << ','
     << m.waiting_time_mean_ms << ',' << m.execution_time_mean_ms << ','
     << m.iterations << ',' << m.collisions << ',' << m.forced_violations
     << ',' << m.makespan_s;
  return os.str();
}

}  // namespace kvsched
