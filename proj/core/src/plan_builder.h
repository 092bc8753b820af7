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

#include <map>
#include <set>

#include "kvsched/scheduler.h"

namespace kvsched::internal {

// Records a plan while applying each action to a scratch copy of the pool,
// so later decisions in the same iteration see their effect.
class PlanBuilder {
 public:
  PlanBuilder(const SchedulerView& view, const SchedulerConfig& cfg);

  const SchedulerView& view() const { return view_; }
  BlockPool& pool() { return pool_; }
  BatchPlan& plan() { return plan_; }
  const RequestView& get(RequestId id) const { return views_.at(id); }

  bool preempted(RequestId id) const { return preempted_.contains(id); }
  bool admitted(RequestId id) const { return admitted_.contains(id); }
  bool touched(RequestId id) const {
    return admitted_.contains(id) || grown_.contains(id);
  }
  bool stalled(const RequestView& r) const {
    return r.rt->stall_until > view_.now;
  }

  void preempt(RequestId id, PreemptStrategy strategy, PreemptReason reason);
  bool admit_fresh(RequestId id, Tokens tokens);
  void admit_embedded(RequestId id, const EmbedQuote& quote);
  bool grow(RequestId id, Tokens tokens);
  bool draw_reserved(RequestId id, Tokens blocks);
  void add_claim(RequestId claimant, RequestId releaser, Tokens tokens);
  void defer(RequestId id) { plan_.deferred.push_back(id); }

  // Largest token grant <= want that a fresh allocation can take now.
  Tokens fresh_capacity(Tokens want) const;
  // Largest growth <= want that the live allocation can take now.
  Tokens growth_capacity(RequestId id, Tokens want) const;

  // Prefill tokens a queued or running request still needs; 0 for
  // requests that resume from a preemption with tokens already generated.
  static Tokens pending_prefill(const RequestView& r);

  // Decode members for every live, unstalled running request with headroom,
  // followed by prefill members for requests admitted this iteration
  // (`chunk` limits prefill tokens per request when positive).
  void finalize_members(Tokens chunk_budget = 0);
  void add_member(RequestId id, Tokens tokens, bool prefill);

 private:
  SchedulerView view_;
  const SchedulerConfig& cfg_;
  BlockPool pool_;
  BatchPlan plan_;
  std::map<RequestId, RequestView> views_;
  std::set<RequestId> preempted_;
  std::set<RequestId> admitted_;
  std::set<RequestId> grown_;
  std::set<RequestId> members_;
};

// Ascending arrival, then id.
bool arrived_before(const RequestView& a, const RequestView& b);

}  // namespace kvsched::internal
