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
#include <deque>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "kvsched/costmodel.h"
#include "kvsched/estimation.h"
#include "kvsched/kvc.h"
#include "kvsched/metrics.h"
#include "kvsched/preemption.h"
#include "kvsched/scheduler.h"
#include "kvsched/workload.h"

namespace kvsched {

struct PoolConfig {
  Tokens capacity = 4096;
  Tokens block_size = 8;
  Tokens reserved_blocks = 8;

  void validate() const;
};

// Synthetic profiling run used to fit the strategy regressors at start-up.
struct ProfileConfig {
  bool use_truth = false;  // skip fitting and use the truth models directly
  double noise_sigma_rel = 0.01;
  Tokens s_min = 256;
  Tokens s_max = 16384;
  int points = 64;

  void validate() const;
  std::vector<Tokens> s_values() const;
};

struct SimConfig {
  TraceSpec workload;
  std::string trace_path;  // when set, replaces the synthetic workload
  SloPolicy slo;
  SchedulerConfig scheduler;
  PredictorConfig predictor;
  ConfidencePolicy confidence;
  IterationCost iteration;
  TruthCosts truth;
  PoolConfig pool;
  ProfileConfig profile;
  std::uint64_t seed = 1;
  double horizon_s = 0.0;  // 0: ten times the trace span, at least 60 s
  std::int64_t max_idle_steps = 1'000'000;
  double rate_window_s = 5.0;
  bool trace_events = false;
  bool check_invariants = true;

  void validate() const;
};

struct Event {
  SimTime t;
  std::string kind;
  std::optional<RequestId> request;
  std::string detail;
};

std::string to_json_line(const Event& e);

struct RunResult {
  MetricsReport metrics;
  std::vector<Event> events;
  std::vector<RequestOutcome> outcomes;
  SweetSpot spot;
  Duration baseline_ttft{0};
  Duration baseline_tbt{0};
};

// The strategy crossover the policies use: fitted from a noisy synthetic
// profile of the truth models, or the truth itself.
SweetSpot derive_sweet_spot(const SimConfig& cfg);

class Engine {
 public:
  // The trace must be sorted by arrival with ids 0..n-1 and SLOs assigned.
  Engine(const SimConfig& cfg, std::vector<Request> trace, SweetSpot spot);

  bool done() const;
  // One scheduling iteration, or a jump to the next event when idle.
  void step();
  RunResult finish();

  SimTime now() const { return now_; }
  const BlockPool& pool() const { return pool_; }
  Duration t_i_max() const { return t_i_max_; }
  const RunCounters& counters() const { return counters_; }
  const RequestRuntime& runtime(RequestId id) const;

 private:
  void admit_arrivals();
  void release_swapped();
  void apply_preemption(const PlanPreemption& p);
  void apply_grant(const PlanGrant& g);
  void start_running(RequestId id);
  void emit_token(RequestId id, SimTime at);
  void complete(RequestId id, SimTime at);
  void sync(RequestId id);
  void advance_idle();
  void check_state() const;
  void log(SimTime t, std::string kind, std::optional<RequestId> id,
           std::string detail);
  [[noreturn]] void abort_run(const std::string& why) const;

  SimConfig cfg_;
  std::vector<Request> trace_;
  std::vector<RequestRuntime> rt_;
  std::vector<RequestOutcome> outcomes_;
  std::unique_ptr<Policy> policy_;
  Predictor predictor_;
  BlockPool pool_;
  SweetSpot spot_;
  SimTime now_ = kSimEpoch;
  SimTime horizon_;
  Duration t_i_max_{0};
  std::size_t next_arrival_ = 0;
  std::set<RequestId> queue_;
  std::set<RequestId> running_;
  std::multimap<SimTime, RequestId> swapping_;
  std::multimap<RequestId, PlanClaim> claims_;  // keyed by releaser
  std::deque<SimTime> recent_arrivals_;
  std::int64_t completed_ = 0;
  std::int64_t idle_steps_ = 0;
  RunCounters counters_;
  std::vector<Event> events_;
};

// Runs a trace whose SLOs are already assigned.
RunResult run_trace(const SimConfig& cfg, std::vector<Request> trace);

// Full pipeline: build or load the trace, calibrate SLO baselines with a
// VllmBlock run when none are configured, assign SLOs, simulate.
RunResult run(const SimConfig& cfg);

// Trace generation/ingestion step of run(), without SLOs.
std::vector<Request> build_trace(const SimConfig& cfg);

}  // namespace kvsched
