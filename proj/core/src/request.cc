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

#include "kvsched/request.h"

#include <sstream>

namespace kvsched {

std::string_view to_string(PreemptStrategy s) {
  return s == PreemptStrategy::kSwap ? "swap" : "recompute";
}

void validate(const Request& req) {
  std::ostringstream err;
  if (req.info.prompt_len < 1) {
    err << "request " << req.info.id << ": prompt_len must be >= 1";
  } else if (req.true_output_len < 1) {
    err << "request " << req.info.id << ": output_len must be >= 1";
  } else if (req.info.slo_ttft.count() <= 0) {
    err << "request " << req.info.id << ": slo_ttft must be > 0";
  } else if (req.info.slo_tbt.count() <= 0) {
    err << "request " << req.info.id << ": slo_tbt must be > 0";
  } else if (req.info.arrival < kSimEpoch) {
    err << "request " << req.info.id << ": arrival must be >= 0";
  }
  if (!err.str().empty()) throw InputError(err.str());
}

std::string_view state_name(const LifecycleState& s) {
  struct Namer {
    std::string_view operator()(const state::Waiting&) const { return "Waiting"; }
    std::string_view operator()(const state::Running&) const { return "Running"; }
    std::string_view operator()(const state::Preempted&) const {
      return "Preempted";
    }
    std::string_view operator()(const state::Completed&) const {
      return "Completed";
    }
  };
  return std::visit(Namer{}, s);
}

Duration remaining_ttft(const RequestInfo& info, const RequestRuntime& rt,
                        SimTime now) {
  if (rt.first_token_at) {
    std::ostringstream err;
    err << "remaining_ttft: request " << info.id
        << " already emitted its first token";
    throw ContractViolation(err.str());
  }
  return info.slo_ttft - (now - info.arrival);
}

Duration remaining_tbt(const RequestInfo& info, const RequestRuntime& rt,
                       SimTime now) {
  if (!rt.last_token_at) {
    std::ostringstream err;
    err << "remaining_tbt: request " << info.id << " has not emitted a token";
    throw ContractViolation(err.str());
  }
  return info.slo_tbt - (now - *rt.last_token_at);
}

Duration remaining_time(const RequestInfo& info, const RequestRuntime& rt,
                        SimTime now) {
  return rt.last_token_at ? remaining_tbt(info, rt, now)
                          : remaining_ttft(info, rt, now);
}

void transition(RequestRuntime& rt, LifecycleState next, SimTime now) {
  const bool legal =
      (rt.waiting() && std::holds_alternative<state::Running>(next)) ||
      (rt.running() && (std::holds_alternative<state::Preempted>(next) ||
                        std::holds_alternative<state::Completed>(next))) ||
      (rt.preempted() && std::holds_alternative<state::Running>(next));
  if (!legal) {
    std::ostringstream err;
    err << "illegal transition " << state_name(rt.state) << " -> "
        << state_name(next);
    throw ContractViolation(err.str());
  }
  if (const auto* p = std::get_if<state::Preempted>(&next)) {
    (void)p;
    ++rt.preemption_count;
    rt.preempted_at = now;
  } else if (const auto* prev = std::get_if<state::Preempted>(&rt.state)) {
    rt.preemption_time_total +=
        (now - rt.preempted_at) + prev->resume_cost_remaining;
    rt.stall_until = now + prev->resume_cost_remaining;
  }
  rt.state = std::move(next);
}

}  // namespace kvsched
