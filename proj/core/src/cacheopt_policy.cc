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
#include <map>
#include <set>

#include "plan_builder.h"
#include "policies.h"

namespace kvsched::internal {

namespace {

struct Item {
  RequestId id;
  bool queued = false;  // true: needs a fresh allocation, false: growth
  Tokens demand = 0;
  Tokens basic = 0;
};

class CacheOptPolicy : public Policy {
 public:
  CacheOptPolicy(const SchedulerConfig& cfg, const IterationCost& cost,
                 SweetSpot spot)
      : cfg_(cfg), cost_(cost), spot_(spot) {}

  PolicyKind kind() const override { return PolicyKind::kCacheOpt; }
  BatchPlan plan(const SchedulerView& view) const override;

 private:
  SchedulerConfig cfg_;
  IterationCost cost_;
  SweetSpot spot_;
};

// Per-plan working state; keeps the policy object itself stateless.
class Planner {
 public:
  Planner(const SchedulerView& view, const SchedulerConfig& cfg,
          const IterationCost& cost, SweetSpot spot)
      : b_(view, cfg), cfg_(cfg), cost_(cost), spot_(spot), now_(view.now) {
    running_.assign(view.running.begin(), view.running.end());
    std::sort(running_.begin(), running_.end(), arrived_before);
    for (const auto& r : view.queue) rt_[r.id()] = remaining_time(*r.info, *r.rt, now_);
    for (const auto& r : view.running) {
      if (r.rt->last_token_at) {
        rt_[r.id()] = remaining_tbt(*r.info, *r.rt, now_);
      } else {
        rt_[r.id()] = remaining_ttft(*r.info, *r.rt, now_);
      }
    }
  }

  BatchPlan run();

 private:
  BlockPool& pool() { return b_.pool(); }
  Duration rt(RequestId id) const { return rt_.at(id); }
  PreemptStrategy strategy_for(RequestId id) const {
    const auto& r = b_.get(id);
    return choose_strategy(context_len(*r.info, *r.rt), spot_);
  }
  bool decoding(const RequestView& r) const {
    return !b_.preempted(r.id()) && !b_.stalled(r) &&
           PlanBuilder::pending_prefill(r) == 0;
  }
  bool live_plain_or_host(RequestId id) {
    const auto* rec = pool().find(id);
    return rec != nullptr && !rec->is_guest();
  }
  void sort_by_rt(std::vector<RequestId>& ids) const {
    std::sort(ids.begin(), ids.end(), [&](RequestId a, RequestId b) {
      if (rt(a) != rt(b)) return rt(a) < rt(b);
      return a < b;
    });
  }

  void resolve_collisions();
  std::vector<RequestId> victim_order(RequestId beneficiary);
  bool make_room(Tokens free_needed, RequestId beneficiary);
  Tokens growth_delta(RequestId id, Tokens n);
  std::optional<EmbedQuote> try_embed(const RequestView& q);
  Tokens batch_tokens();
  Duration latency_for(Tokens extra_prefill);
  bool slo_allows(Tokens extra_prefill, RequestId newcomer);
  // Only requests that can still meet their SLO in the next iteration may
  // evict others.
  bool rescuable(RequestId id, Tokens prefill) {
    return !tbt_lost(b_.get(id)) && rt(id) >= latency_for(prefill);
  }
  static bool tbt_lost(const RequestView& r) { return r.rt->max_tbt > r.info->slo_tbt; }
  // Critical requests whose SLO is still attainable are never evicted.
  bool protected_slo(const RequestView& r) const {
    return !tbt_lost(r) && rt(r.id()) - b_.view().t_i_max < cfg_.epsilon;
  }
  void fund_critical_queue(std::vector<RequestId> n_w);
  void fund_critical_running(std::vector<RequestId> n_r);
  void allocate_remaining(std::vector<RequestId> selected,
                          const std::vector<RequestId>& n_r_prime,
                          const std::vector<RequestId>& rest);
  void pair_unfulfilled();
  void conserve_work();
  void break_wedge();

  PlanBuilder b_;
  const SchedulerConfig& cfg_;
  const IterationCost& cost_;
  SweetSpot spot_;
  SimTime now_;
  std::vector<RequestView> running_;
  std::map<RequestId, Duration> rt_;
  std::set<RequestId> critical_running_;
  std::set<RequestId> deferred_;
  // Set while breaking a wedge: every running request may be evicted.
  bool relaxed_ = false;
  std::vector<Item> residual_;
  std::vector<Item> unfulfilled_;
};

// A host that has used up its own part of the region first takes fresh
// blocks, as a paged cache would; a guest is evicted only when none are left.
void Planner::resolve_collisions() {
  const Tokens B = cfg_.small_block_B;
  for (const auto& r : running_) {
    const RequestId id = r.id();
    if (b_.preempted(id) || !live_plain_or_host(id)) continue;
    if (pool().headroom(id) >= 1 || !pool().at(id).is_host()) continue;
    b_.plan().collisions.push_back(id);
    if (b_.grow(id, B)) continue;
    if (cfg_.enable_reserve && b_.draw_reserved(id, ceil_div(B, pool().block_size()))) {
      continue;
    }
    while (pool().headroom(id) < 1 && pool().at(id).is_host()) {
      const auto& host = pool().at(id);
      RequestId lowest = host.embedded_guests.front();
      for (RequestId g : host.embedded_guests) {
        if (pool().at(g).embed_offset < pool().at(lowest).embed_offset) lowest = g;
      }
      b_.preempt(lowest, strategy_for(lowest), PreemptReason::kCollision);
    }
  }
}

std::vector<RequestId> Planner::victim_order(RequestId beneficiary) {
  std::vector<VictimCandidate> cands;
  for (const auto& r : running_) {
    const RequestId id = r.id();
    // A request still waiting for its first token would come straight back
    // as a critical arrival, so only decoding requests are evicted.
    if (id == beneficiary || b_.preempted(id) || b_.touched(id) ||
        (!relaxed_ && (r.rt->generated == 0 || protected_slo(r))) ||
        !live_plain_or_host(id)) {
      continue;
    }
    cands.push_back({id, r.info->arrival, r.info->slo_tbt, estimated_remaining(r),
                     pool().at(id).used});
  }
  if (cfg_.victim_order == VictimOrder::kLastArrived) {
    return order_victims_last_arrived(cands);
  }
  return order_victims(cands, cfg_.buckets);
}

// Preempts victims in order until free space reaches free_needed. Nothing
// is preempted when even all eligible victims would not be enough.
bool Planner::make_room(Tokens free_needed, RequestId beneficiary) {
  if (pool().free_tokens() >= free_needed) return true;
  const auto order = victim_order(beneficiary);
  BlockPool trial = pool();
  std::size_t take = 0;
  while (trial.free_tokens() < free_needed && take < order.size()) {
    trial.release(order[take++]);
  }
  if (trial.free_tokens() < free_needed) return false;
  for (std::size_t i = 0; i < take; ++i) {
    b_.preempt(order[i], strategy_for(order[i]), PreemptReason::kMakeRoom);
  }
  return true;
}

Tokens Planner::growth_delta(RequestId id, Tokens n) {
  const auto& rec = pool().at(id);
  return round_up(rec.granted + n, pool().block_size()) - rec.footprint;
}

std::optional<EmbedQuote> Planner::try_embed(const RequestView& q) {
  if (!cfg_.enable_embedding) return std::nullopt;
  std::vector<RequestId> hosts;
  for (const auto& r : running_) {
    if (!decoding(r) || b_.touched(r.id()) || !live_plain_or_host(r.id())) continue;
    if (pool().headroom(r.id()) < 1) continue;
    hosts.push_back(r.id());
  }
  return pool().find_embedding_host(hosts, context_len(*q.info, *q.rt),
                                    estimated_remaining(q), cfg_.buffer_b,
                                    cfg_.allow_stacking);
}

Tokens Planner::batch_tokens() {
  Tokens tokens = 0;
  for (const auto& r : running_) {
    if (decoding(r) && pool().headroom(r.id()) >= 1) ++tokens;
  }
  for (const auto& g : b_.plan().grants) {
    if (b_.admitted(g.id)) tokens += PlanBuilder::pending_prefill(b_.get(g.id));
  }
  return tokens;
}

Duration Planner::latency_for(Tokens extra_prefill) {
  Tokens prefill = extra_prefill;
  Tokens decode = 0;
  for (const auto& r : running_) {
    if (decoding(r) && pool().headroom(r.id()) >= 1) ++decode;
  }
  for (const auto& g : b_.plan().grants) {
    if (b_.admitted(g.id)) prefill += PlanBuilder::pending_prefill(b_.get(g.id));
  }
  return iteration_latency(cost_, prefill, decode);
}

// Admitting extra prefill tokens must not push any member that would meet
// its SLO at the current iteration latency past it.
bool Planner::slo_allows(Tokens extra_prefill, RequestId newcomer) {
  const Duration current = latency_for(0);
  const Duration longer = latency_for(extra_prefill);
  auto breaks = [&](RequestId id) {
    const Duration r = rt(id);
    return r >= current && r < longer;
  };
  if (breaks(newcomer)) return false;
  for (const auto& r : running_) {
    if (decoding(r) && pool().headroom(r.id()) >= 1 && breaks(r.id())) return false;
  }
  for (const auto& g : b_.plan().grants) {
    if (b_.admitted(g.id) && breaks(g.id)) return false;
  }
  return true;
}

void Planner::fund_critical_queue(std::vector<RequestId> n_w) {
  sort_by_rt(n_w);
  const Tokens B = cfg_.small_block_B;
  for (RequestId id : n_w) {
    const auto& q = b_.get(id);
    if (auto quote = try_embed(q)) {
      b_.admit_embedded(id, *quote);
      continue;
    }
    const Tokens ctx = context_len(*q.info, *q.rt);
    const Tokens basic = ctx + B;
    const Tokens need = pool().footprint_for(basic);
    if (pool().free_tokens() >= need ||
        (rescuable(id, PlanBuilder::pending_prefill(q)) && make_room(need, id))) {
      b_.admit_fresh(id, basic);
      const Tokens residual = full_demand(q) - basic;
      if (residual > 0) residual_.push_back({id, false, residual, 0});
    } else {
      b_.defer(id);
      deferred_.insert(id);
    }
  }
}

void Planner::fund_critical_running(std::vector<RequestId> n_r) {
  sort_by_rt(n_r);
  const Tokens B = cfg_.small_block_B;
  for (RequestId id : n_r) {
    if (b_.preempted(id)) continue;
    const auto& r = b_.get(id);
    bool funded = false;
    if (pool().at(id).is_guest()) {
      const Tokens g = b_.growth_capacity(id, B);
      funded = g >= 1 && b_.grow(id, g);
    } else {
      funded = b_.grow(id, B);
      if (!funded && cfg_.enable_reserve) {
        funded = b_.draw_reserved(id, ceil_div(B, pool().block_size()));
      }
      if (!funded && rescuable(id, 0) && make_room(growth_delta(id, B), id)) {
        funded = b_.grow(id, B);
      }
    }
    if (!funded) {
      b_.defer(id);
      deferred_.insert(id);
      continue;
    }
    const Tokens residual = full_demand(r) - pool().at(id).granted;
    if (residual > 0) residual_.push_back({id, false, residual, 0});
  }
}

void Planner::allocate_remaining(std::vector<RequestId> selected,
                                 const std::vector<RequestId>& n_r_prime,
                                 const std::vector<RequestId>& rest) {
  const Tokens B = cfg_.small_block_B;
  std::vector<Item> items = residual_;
  std::set<RequestId> in_round;
  for (const auto& it : items) in_round.insert(it.id);

  for (RequestId id : selected) {
    const auto& q = b_.get(id);
    if (auto quote = try_embed(q)) {
      b_.admit_embedded(id, *quote);
      continue;
    }
    const Tokens ctx = context_len(*q.info, *q.rt);
    items.push_back({id, true, full_demand(q), ctx + B});
    in_round.insert(id);
  }
  for (RequestId id : n_r_prime) {
    if (b_.preempted(id) || in_round.contains(id)) continue;
    const auto& r = b_.get(id);
    const Tokens residual = std::max(B, full_demand(r) - pool().at(id).granted);
    items.push_back({id, false, residual, 1});
    in_round.insert(id);
  }
  if (cfg_.enable_proactive) {
    std::vector<ProactiveCandidate> cands;
    for (const auto& r : running_) {
      if (!decoding(r) || in_round.contains(r.id()) || !pool().contains(r.id())) {
        continue;
      }
      const bool unfulfilled = full_demand(r) > pool().at(r.id()).granted;
      cands.push_back({r.id(), estimated_remaining(r), unfulfilled});
    }
    for (RequestId id : proactive_include(cands, cfg_.preallocate_m)) {
      const Tokens residual = full_demand(b_.get(id)) - pool().at(id).granted;
      items.push_back({id, false, residual, 1});
      in_round.insert(id);
    }
  }

  auto apply = [&](const Item& it, Tokens grant) {
    Tokens given = 0;
    if (it.queued) {
      const Tokens g = b_.fresh_capacity(grant);
      if (g >= it.basic && b_.admit_fresh(it.id, g)) given = g;
    } else if (grant > 0) {
      const Tokens g = b_.growth_capacity(it.id, grant);
      if (g >= 1 && b_.grow(it.id, g)) given = g;
    }
    const bool placed = !it.queued || given > 0;
    if (placed && given < it.demand) unfulfilled_.push_back(it);
  };

  const Tokens a_prime = pool().free_tokens();
  Tokens sum_m = 0;
  for (const auto& it : items) sum_m += it.demand;

  if (sum_m <= a_prime) {
    for (const auto& it : items) apply(it, it.demand);
    // Room left over: keep admitting while it fits and no member's SLO breaks.
    for (RequestId id : rest) {
      if (b_.admitted(id) || deferred_.contains(id) || in_round.contains(id)) continue;
      const auto& q = b_.get(id);
      const Tokens basic = context_len(*q.info, *q.rt) + B;
      if (pool().free_tokens() < pool().footprint_for(basic)) break;
      if (!slo_allows(PlanBuilder::pending_prefill(q), id)) break;
      const Tokens demand = full_demand(q);
      const Tokens grant = b_.fresh_capacity(demand);
      b_.admit_fresh(id, grant);
      if (grant < demand) {
        unfulfilled_.push_back({id, true, demand, basic});
        break;
      }
    }
    return;
  }

  // Over-subscribed: amortize, dropping queued requests that would not
  // receive their basic requirement.
  std::vector<Tokens> grants;
  for (;;) {
    std::vector<AmortizeInput> inputs;
    for (const auto& it : items) {
      inputs.push_back({it.id, rt(it.id), b_.get(it.id).info->prompt_len, it.demand});
    }
    grants = amortize_capped(inputs, a_prime, cfg_.invert_amortization);
    std::optional<std::size_t> drop;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!items[i].queued || grants[i] >= items[i].basic) continue;
      if (!drop || grants[i] < grants[*drop] ||
          (grants[i] == grants[*drop] && items[i].id > items[*drop].id)) {
        drop = i;
      }
    }
    if (!drop) break;
    items.erase(items.begin() + static_cast<std::ptrdiff_t>(*drop));
  }
  for (std::size_t i = 0; i < items.size(); ++i) apply(items[i], grants[i]);
}

void Planner::pair_unfulfilled() {
  if (!cfg_.enable_pairing) return;
  std::set<RequestId> releasers;
  for (const auto& it : unfulfilled_) {
    if (b_.preempted(it.id) || !pool().contains(it.id)) continue;
    const auto& r = b_.get(it.id);
    const auto& rec = pool().at(it.id);
    if (rec.is_guest()) continue;
    const Tokens have = rec.granted - context_len(*r.info, *r.rt);
    const Tokens needed = full_demand(r) - rec.granted;
    if (needed <= 0) continue;
    std::vector<PairCandidate> cands;
    for (const auto& other : running_) {
      const RequestId oid = other.id();
      if (oid == it.id || releasers.contains(oid) || b_.preempted(oid) ||
          !live_plain_or_host(oid)) {
        continue;
      }
      const auto& orec = pool().at(oid);
      Tokens frees = orec.footprint;
      for (RequestId g : orec.embedded_guests) {
        frees -= round_up(pool().at(g).granted, pool().block_size());
      }
      cands.push_back({oid, estimated_remaining(other), frees});
    }
    if (auto releaser = pair_release(std::max<Tokens>(0, have), needed, cands)) {
      b_.add_claim(it.id, *releaser, needed);
      releasers.insert(*releaser);
    }
  }
}

// No queued request waits while it fits both the free KVC and the budget.
void Planner::conserve_work() {
  const Tokens B = cfg_.small_block_B;
  std::vector<RequestId> queue;
  for (const auto& q : b_.view().queue) {
    if (!b_.admitted(q.id()) && !deferred_.contains(q.id())) queue.push_back(q.id());
  }
  sort_by_rt(queue);
  Tokens used = batch_tokens();
  for (RequestId id : queue) {
    const auto& q = b_.get(id);
    const Tokens tokens = std::max<Tokens>(1, PlanBuilder::pending_prefill(q));
    if (used + tokens > cfg_.token_budget) continue;
    const Tokens basic = context_len(*q.info, *q.rt) + B;
    if (pool().free_tokens() < pool().footprint_for(basic)) continue;
    const Tokens demand = full_demand(q);
    const Tokens grant = b_.fresh_capacity(demand);
    if (b_.admit_fresh(id, grant)) {
      used += tokens;
      if (grant < demand) unfulfilled_.push_back({id, true, demand, basic});
    }
  }
}

// When no running request could make progress and none will unstall on its
// own, the most urgent exhausted one evicts whatever it takes to grow.
void Planner::break_wedge() {
  if (!b_.plan().grants.empty()) return;
  std::vector<RequestId> exhausted;
  for (const auto& r : running_) {
    if (b_.preempted(r.id())) continue;
    if (b_.stalled(r) || PlanBuilder::pending_prefill(r) > 0) return;
    if (pool().headroom(r.id()) >= 1) return;
    if (live_plain_or_host(r.id())) exhausted.push_back(r.id());
  }
  if (exhausted.empty()) return;
  sort_by_rt(exhausted);
  const RequestId id = exhausted.front();
  const Tokens B = cfg_.small_block_B;
  relaxed_ = true;
  if (make_room(growth_delta(id, B), id)) b_.grow(id, B);
  relaxed_ = false;
}

BatchPlan Planner::run() {
  resolve_collisions();

  std::vector<ClassifyInput> queued;
  for (const auto& q : b_.view().queue) queued.push_back({q.id(), rt(q.id()), false});
  std::vector<ClassifyInput> running;
  for (const auto& r : running_) {
    if (!decoding(r)) continue;
    const bool exhausted = pool().headroom(r.id()) < 1;
    running.push_back({r.id(), rt(r.id()), exhausted});
  }
  CriticalSets sets =
      classify_critical(queued, running, b_.view().t_i_max, cfg_.epsilon);
  critical_running_.insert(sets.n_r.begin(), sets.n_r.end());

  fund_critical_queue(sets.n_w);
  fund_critical_running(sets.n_r);

  std::vector<RequestId> waiting = sets.n_w_prime;
  sort_by_rt(waiting);
  std::vector<BudgetCandidate> cands;
  for (RequestId id : waiting) {
    cands.push_back({id, std::max<Tokens>(1, PlanBuilder::pending_prefill(b_.get(id)))});
  }
  const auto selected = fill_token_budget(cands, batch_tokens(), cfg_.token_budget);
  std::vector<RequestId> n_r_prime = sets.n_r_prime;
  sort_by_rt(n_r_prime);
  allocate_remaining(selected, n_r_prime, waiting);
  pair_unfulfilled();
  conserve_work();
  break_wedge();

  b_.finalize_members(0);
  return std::move(b_.plan());
}

BatchPlan CacheOptPolicy::plan(const SchedulerView& view) const {
  Planner p(view, cfg_, cost_, spot_);
  return p.run();
}

}  // namespace

std::unique_ptr<Policy> make_cacheopt(const SchedulerConfig& cfg,
                                      const IterationCost& cost, SweetSpot spot) {
  return std::make_unique<CacheOptPolicy>(cfg, cost, spot);
}

}  // namespace kvsched::internal
