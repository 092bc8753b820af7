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

#include <optional>
#include <string_view>
#include <variant>

#include "kvsched/length_estimate.h"
#include "kvsched/types.h"

namespace kvsched {

enum class PreemptStrategy { kSwap, kRecompute };

std::string_view to_string(PreemptStrategy s);

// Policy-visible part of a request. The true output length is deliberately
// absent: policies only ever see this plus the runtime record.
struct RequestInfo {
  RequestId id;
  SimTime arrival;
  Tokens prompt_len = 1;
  Duration slo_ttft{1};
  Duration slo_tbt{1};
};

// Engine-owned request. true_output_len is the oracle value.
struct Request {
  RequestInfo info;
  Tokens true_output_len = 1;
};

// Throws InputError if the request breaks its field invariants.
void validate(const Request& req);

namespace state {
struct Waiting {};
struct Running {};
struct Preempted {
  PreemptStrategy strategy = PreemptStrategy::kRecompute;
  Duration resume_cost_remaining{0};
};
struct Completed {};
}  // namespace state

using LifecycleState =
    std::variant<state::Waiting, state::Running, state::Preempted,
                 state::Completed>;

std::string_view state_name(const LifecycleState& s);

struct RequestRuntime {
  LifecycleState state = state::Waiting{};
  Tokens generated = 0;
  Tokens allocated_kvc = 0;
  Tokens used_kvc = 0;
  // Prompt tokens already prefilled; only chunked prefill spreads this over
  // more than one iteration.
  Tokens prefilled = 0;
  std::optional<SimTime> first_token_at;
  std::optional<SimTime> last_token_at;
  std::optional<SimTime> first_scheduled_at;
  std::optional<SimTime> completed_at;
  Duration max_tbt{0};
  int preemption_count = 0;
  Duration preemption_time_total{0};
  SimTime preempted_at{};
  // A resumed request is allocated but cannot emit until this instant.
  SimTime stall_until{};
  std::optional<LengthEstimate> estimate;

  bool waiting() const { return std::holds_alternative<state::Waiting>(state); }
  bool running() const { return std::holds_alternative<state::Running>(state); }
  bool preempted() const {
    return std::holds_alternative<state::Preempted>(state);
  }
  bool completed() const {
    return std::holds_alternative<state::Completed>(state);
  }
};

// KV tokens the request must hold to continue: prompt plus everything
// generated so far. After a recompute preemption this is the folded prompt.
inline Tokens context_len(const RequestInfo& info, const RequestRuntime& rt) {
  return info.prompt_len + rt.generated;
}

// slo_ttft - (now - arrival). Negative once the SLO is missed.
Duration remaining_ttft(const RequestInfo& info, const RequestRuntime& rt,
                        SimTime now);

// slo_tbt - (now - last_token_at).
Duration remaining_tbt(const RequestInfo& info, const RequestRuntime& rt,
                       SimTime now);

// Remaining time against whichever SLO currently governs the request.
Duration remaining_time(const RequestInfo& info, const RequestRuntime& rt,
                        SimTime now);

// Legal moves: Waiting->Running, Running->{Preempted,Completed},
// Preempted->Running. Entering Preempted bumps the preemption counters;
// leaving it accumulates the halted time plus the pending resume cost.
void transition(RequestRuntime& rt, LifecycleState next, SimTime now);

// Read-only view handed to scheduling policies.
struct RequestView {
  const RequestInfo* info;
  const RequestRuntime* rt;

  RequestId id() const { return info->id; }
};

}  // namespace kvsched
