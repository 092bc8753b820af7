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

#include <algorithm>

#include "plan_builder.h"
#include "policies.h"

namespace kvsched::internal {

namespace {

std::vector<RequestView> sorted_running(const SchedulerView& v) {
  std::vector<RequestView> out(v.running.begin(), v.running.end());
  std::sort(out.begin(), out.end(), arrived_before);
  return out;
}

// Previously preempted requests first, then new ones; each by arrival.
std::vector<RequestView> sorted_queue(const SchedulerView& v) {
  std::vector<RequestView> out(v.queue.begin(), v.queue.end());
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    const bool pa = a.rt->preemption_count > 0;
    const bool pb = b.rt->preemption_count > 0;
    if (pa != pb) return pa;
    return arrived_before(a, b);
  });
  return out;
}

bool decoding(const PlanBuilder& b, const RequestView& r) {
  return !b.preempted(r.id()) && !b.stalled(r) &&
         PlanBuilder::pending_prefill(r) == 0;
}

Tokens running_tokens(PlanBuilder& b, const std::vector<RequestView>& running,
                      bool chunked) {
  Tokens tokens = 0;
  for (const auto& r : running) {
    if (b.preempted(r.id()) || b.stalled(r)) continue;
    const Tokens pending = PlanBuilder::pending_prefill(r);
    if (pending > 0) {
      if (chunked) tokens += pending;
    } else if (b.pool().headroom(r.id()) >= 1) {
      ++tokens;
    }
  }
  return tokens;
}

// FCFS admission: stops at the first request that does not fit, so later
// arrivals never overtake earlier ones. grant_for gives the KVC to request.
template <typename GrantFor>
void admit_fcfs(PlanBuilder& b, const std::vector<RequestView>& order,
                Tokens used, Tokens budget, bool chunked, GrantFor grant_for) {
  bool any_prefill = false;
  for (const auto& q : order) {
    const Tokens pending = PlanBuilder::pending_prefill(q);
    if (chunked) {
      if (pending > 0 && used >= budget) break;
    } else if (pending > 0 && used + pending > budget && any_prefill) {
      break;
    }
    if (!b.admit_fresh(q.id(), grant_for(q))) break;
    used += chunked ? std::min(pending, budget - used) : pending;
    any_prefill = any_prefill || pending > 0;
  }
}

class VllmPolicy : public Policy {
 public:
  VllmPolicy(const SchedulerConfig& cfg, bool chunked)
      : cfg_(cfg), chunked_(chunked) {}

  PolicyKind kind() const override {
    return chunked_ ? PolicyKind::kSarathiChunked : PolicyKind::kVllmBlock;
  }

  BatchPlan plan(const SchedulerView& view) const override {
    PlanBuilder b(view, cfg_);
    const auto running = sorted_running(view);
    for (const auto& r : running) {
      if (!decoding(b, r) || b.pool().headroom(r.id()) >= 1) continue;
      // Out of space: take one more block, evicting the latest arrival
      // (possibly the requester itself) until it fits.
      while (!b.grow(r.id(), cfg_.vllm_block)) {
        auto victim = std::find_if(running.rbegin(), running.rend(),
                                   [&](const auto& v) { return !b.preempted(v.id()); });
        const bool self = victim->id() == r.id();
        b.preempt(victim->id(), PreemptStrategy::kRecompute,
                  self ? PreemptReason::kSelf : PreemptReason::kMakeRoom);
        if (self) break;
      }
    }
    const Tokens block = cfg_.vllm_block;
    admit_fcfs(b, sorted_queue(view), running_tokens(b, running, chunked_),
               cfg_.token_budget, chunked_, [&](const RequestView& q) {
                 return round_up(context_len(*q.info, *q.rt) + 1, block);
               });
    b.finalize_members(chunked_ ? cfg_.token_budget : 0);
    return std::move(b.plan());
  }

 private:
  SchedulerConfig cfg_;
  bool chunked_;
};

Tokens predicted(const RequestView& r) {
  return r.rt->estimate ? r.rt->estimate->predicted_len : 1;
}

class RlpPolicy : public Policy {
 public:
  explicit RlpPolicy(const SchedulerConfig& cfg) : cfg_(cfg) {}

  PolicyKind kind() const override { return PolicyKind::kRlp; }

  BatchPlan plan(const SchedulerView& view) const override {
    PlanBuilder b(view, cfg_);
    const auto running = sorted_running(view);
    for (const auto& r : running) {
      if (!decoding(b, r) || b.pool().headroom(r.id()) >= 1) continue;
      if (cfg_.rlp_victim_order == VictimOrder::kSelf) {
        b.preempt(r.id(), PreemptStrategy::kRecompute, PreemptReason::kSelf);
        continue;
      }
      while (!b.grow(r.id(), cfg_.small_block_B)) {
        auto victim = std::find_if(running.rbegin(), running.rend(),
                                   [&](const auto& v) { return !b.preempted(v.id()); });
        const bool self = victim->id() == r.id();
        b.preempt(victim->id(), PreemptStrategy::kRecompute,
                  self ? PreemptReason::kSelf : PreemptReason::kMakeRoom);
        if (self) break;
      }
    }

    // Requests whose predicted length shares the head's 50-token bucket
    // are pulled forward within the grouping window.
    auto order = sorted_queue(view);
    if (!order.empty()) {
      const Tokens head_bucket = predicted(order.front()) / 50;
      const auto window_end =
          order.begin() +
          static_cast<std::ptrdiff_t>(std::min<std::size_t>(
              order.size(), static_cast<std::size_t>(cfg_.rlp_group_window)));
      std::stable_partition(order.begin(), window_end, [&](const auto& q) {
        return predicted(q) / 50 == head_bucket;
      });
    }
    const Tokens pad = cfg_.rlp_padding;
    const Tokens B = cfg_.small_block_B;
    admit_fcfs(b, order, running_tokens(b, running, false), cfg_.token_budget,
               false, [&](const RequestView& q) {
                 const Tokens ctx = context_len(*q.info, *q.rt);
                 const Tokens ahead = std::max<Tokens>(0, predicted(q) - q.rt->generated);
                 return std::max(ctx + ahead + pad, ctx + B);
               });
    b.finalize_members(0);
    return std::move(b.plan());
  }

 private:
  SchedulerConfig cfg_;
};

class S3Policy : public Policy {
 public:
  explicit S3Policy(const SchedulerConfig& cfg) : cfg_(cfg) {}

  PolicyKind kind() const override { return PolicyKind::kS3; }

  BatchPlan plan(const SchedulerView& view) const override {
    PlanBuilder b(view, cfg_);
    const auto running = sorted_running(view);
    for (const auto& r : running) {
      if (!decoding(b, r) || b.pool().headroom(r.id()) >= 1) continue;
      b.preempt(r.id(), PreemptStrategy::kSwap, PreemptReason::kSelf);
    }
    const Tokens bucket = cfg_.s3_bucket;
    const Tokens B = cfg_.small_block_B;
    admit_fcfs(b, sorted_queue(view), running_tokens(b, running, false),
               cfg_.token_budget, false, [&](const RequestView& q) {
                 // Bucket ceiling of the prediction, doubled per preemption.
                 Tokens out = round_up(std::max<Tokens>(1, predicted(q)), bucket);
                 for (int i = 0; i < q.rt->preemption_count && out < (Tokens{1} << 40); ++i) {
                   out *= 2;
                 }
                 return std::max(q.info->prompt_len + out,
                                 context_len(*q.info, *q.rt) + B);
               });
    b.finalize_members(0);
    return std::move(b.plan());
  }

 private:
  SchedulerConfig cfg_;
};

}  // namespace

std::unique_ptr<Policy> make_vllm(const SchedulerConfig& cfg, bool chunked) {
  return std::make_unique<VllmPolicy>(cfg, chunked);
}

std::unique_ptr<Policy> make_rlp(const SchedulerConfig& cfg) {
  return std::make_unique<RlpPolicy>(cfg);
}

std::unique_ptr<Policy> make_s3(const SchedulerConfig& cfg) {
  return std::make_unique<S3Policy>(cfg);
}

}  // namespace kvsched::internal
