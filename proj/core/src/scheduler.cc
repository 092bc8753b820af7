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

#include "kvsched/scheduler.h"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <numeric>

#include "plan_builder.h"
#include "policies.h"

namespace kvsched {

namespace mp = boost::multiprecision;

std::string_view to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::kCacheOpt:
      return "CacheOpt";
    case PolicyKind::kVllmBlock:
      return "VllmBlock";
    case PolicyKind::kRlp:
      return "Rlp";
    case PolicyKind::kS3:
      return "S3";
    case PolicyKind::kSarathiChunked:
      return "SarathiChunked";
  }
  return "?";
}

std::vector<std::string_view> policy_names() {
  return {"CacheOpt", "VllmBlock", "Rlp", "S3", "SarathiChunked"};
}

std::optional<PolicyKind> parse_policy(std::string_view name) {
  for (auto p : {PolicyKind::kCacheOpt, PolicyKind::kVllmBlock, PolicyKind::kRlp,
                 PolicyKind::kS3, PolicyKind::kSarathiChunked}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

std::string_view to_string(VictimOrder v) {
  switch (v) {
    case VictimOrder::kSloAware:
      return "slo_aware";
    case VictimOrder::kLastArrived:
      return "fcfs";
    case VictimOrder::kSelf:
      return "self";
  }
  return "?";
}

std::optional<VictimOrder> parse_victim_order(std::string_view name) {
  for (auto v : {VictimOrder::kSloAware, VictimOrder::kLastArrived,
                 VictimOrder::kSelf}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

std::string_view to_string(GrantSource g) {
  switch (g) {
    case GrantSource::kFresh:
      return "fresh";
    case GrantSource::kEmbedded:
      return "embedded";
    case GrantSource::kReserved:
      return "reserved";
    case GrantSource::kGrowth:
      return "growth";
    case GrantSource::kPairedRelease:
      return "paired_release";
  }
  return "?";
}

std::string_view to_string(PreemptReason r) {
  switch (r) {
    case PreemptReason::kMakeRoom:
      return "make_room";
    case PreemptReason::kSelf:
      return "exhausted";
    case PreemptReason::kCollision:
      return "collision";
  }
  return "?";
}

void SchedulerConfig::validate() const {
  if (small_block_B < 1) throw InputError("scheduler.small_block_B must be >= 1");
  if (epsilon < Duration::zero()) throw InputError("scheduler.epsilon must be >= 0");
  if (token_budget < 1) throw InputError("scheduler.token_budget must be >= 1");
  if (preallocate_m < 0) throw InputError("scheduler.preallocate_m must be >= 0");
  if (buffer_b < 0) throw InputError("scheduler.buffer_b must be >= 0");
  if (vllm_block < 1) throw InputError("scheduler.vllm_block must be >= 1");
  if (rlp_padding < 0) throw InputError("scheduler.rlp_padding must be >= 0");
  if (rlp_group_window < 1) {
    throw InputError("scheduler.rlp_group_window must be >= 1");
  }
  if (s3_bucket < 1) throw InputError("scheduler.s3_bucket must be >= 1");
  if (victim_order == VictimOrder::kSelf) {
    throw InputError("scheduler.victim_order: CacheOpt cannot evict the requester");
  }
  buckets.validate();
}

CriticalSets classify_critical(std::span<const ClassifyInput> queued,
                               std::span<const ClassifyInput> running,
                               Duration t_i_max, Duration epsilon) {
  CriticalSets sets;
  for (const auto& q : queued) {
    (q.remaining - t_i_max < epsilon ? sets.n_w : sets.n_w_prime).push_back(q.id);
  }
  for (const auto& r : running) {
    if (!r.exhausted) continue;
    (r.remaining - t_i_max < epsilon ? sets.n_r : sets.n_r_prime).push_back(r.id);
  }
  return sets;
}

Tokens basic_demand(std::span<const Tokens> n_w_prompts, std::size_t n_r_count,
                    Tokens small_block_B) {
  Tokens total = 0;
  for (Tokens p : n_w_prompts) total += p + small_block_B;
  return total + static_cast<Tokens>(n_r_count) * small_block_B;
}

std::vector<RequestId> fill_token_budget(std::span<const BudgetCandidate> ordered,
                                         Tokens used, Tokens token_budget) {
  std::vector<RequestId> out;
  for (const auto& c : ordered) {
    if (used >= token_budget) break;
    if (used + c.tokens <= token_budget) {
      out.push_back(c.id);
      used += c.tokens;
    }
  }
  return out;
}

std::vector<Tokens> amortize(std::span<const AmortizeInput> reqs, Tokens a_prime,
                             bool invert) {
  if (a_prime < 0) throw ContractViolation("amortize: a_prime must be >= 0");
  const std::size_t n = reqs.size();
  std::vector<Tokens> grants(n, 0);
  if (n == 0 || a_prime == 0) return grants;

  // The normalising sums in w_i cancel between numerator and denominator,
  // so shares are proportional to RT_i * s_p_i (or its reciprocal).
  std::vector<mp::cpp_int> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (reqs[i].prompt < 1) throw ContractViolation("amortize: prompt must be >= 1");
    const std::int64_t rt = std::max<std::int64_t>(1, reqs[i].rt.count());
    x[i] = mp::cpp_int(rt) * reqs[i].prompt;
  }
  if (invert) {
    mp::cpp_int product = 1;
    for (const auto& v : x) product *= v;
    for (auto& v : x) v = product / v;
  }
  const mp::cpp_int total = std::accumulate(x.begin(), x.end(), mp::cpp_int(0));

  std::vector<mp::cpp_int> remainder(n);
  Tokens assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const mp::cpp_int scaled = x[i] * a_prime;
    grants[i] = static_cast<Tokens>(scaled / total);
    remainder[i] = scaled % total;
    assigned += grants[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return reqs[a].id < reqs[b].id;
  });
  for (Tokens k = 0; k < a_prime - assigned; ++k) {
    ++grants[order[static_cast<std::size_t>(k)]];
  }
  return grants;
}

std::vector<Tokens> amortize_capped(std::span<const AmortizeInput> reqs,
                                    Tokens a_prime, bool invert) {
  const std::size_t n = reqs.size();
  std::vector<Tokens> grants(n, 0);
  std::vector<bool> fixed(n, false);
  Tokens left = a_prime;
  for (;;) {
    std::vector<AmortizeInput> active;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) {
      if (!fixed[i]) {
        active.push_back(reqs[i]);
        index.push_back(i);
      }
    }
    if (active.empty()) break;
    const auto shares = amortize(active, left, invert);
    bool capped = false;
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (shares[k] >= active[k].demand) {
        grants[index[k]] = active[k].demand;
        fixed[index[k]] = true;
        left -= active[k].demand;
        capped = true;
      }
    }
    if (!capped) {
      for (std::size_t k = 0; k < active.size(); ++k) grants[index[k]] = shares[k];
      break;
    }
  }
  return grants;
}

std::optional<RequestId> pair_release(Tokens exhaust_iters, Tokens needed,
                                      std::span<const PairCandidate> running) {
  const PairCandidate* best = nullptr;
  for (const auto& c : running) {
    if (c.remaining_iters > exhaust_iters || c.footprint < needed) continue;
    if (best == nullptr || c.footprint < best->footprint ||
        (c.footprint == best->footprint &&
         (c.remaining_iters < best->remaining_iters ||
          (c.remaining_iters == best->remaining_iters && c.id < best->id)))) {
      best = &c;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->id;
}

std::vector<RequestId> proactive_include(
    std::span<const ProactiveCandidate> running, int m) {
  if (m < 0) throw ContractViolation("proactive_include: m must be >= 0");
  std::vector<RequestId> out;
  for (const auto& c : running) {
    if (c.unfulfilled && c.remaining_iters <= m) out.push_back(c.id);
  }
  return out;
}

Tokens estimated_remaining(const RequestView& r) {
  const Tokens est = r.rt->estimate ? r.rt->estimate->estimated_len : 1;
  return std::max<Tokens>(1, est - r.rt->generated);
}

Tokens full_demand(const RequestView& r) {
  return context_len(*r.info, *r.rt) + estimated_remaining(r);
}

namespace internal {

bool arrived_before(const RequestView& a, const RequestView& b) {
  if (a.info->arrival != b.info->arrival) return a.info->arrival < b.info->arrival;
  return a.id() < b.id();
}

PlanBuilder::PlanBuilder(const SchedulerView& view, const SchedulerConfig& cfg)
    : view_(view), cfg_(cfg), pool_(*view.pool) {
  for (const auto& r : view.queue) views_.emplace(r.id(), r);
  for (const auto& r : view.running) views_.emplace(r.id(), r);
}

void PlanBuilder::preempt(RequestId id, PreemptStrategy strategy,
                          PreemptReason reason) {
  if (preempted_.contains(id)) {
    throw ContractViolation("plan: request preempted twice");
  }
  if (pool_.contains(id)) pool_.release(id);
  preempted_.insert(id);
  plan_.preempt_list.push_back({id, strategy, reason});
}

bool PlanBuilder::admit_fresh(RequestId id, Tokens tokens) {
  if (tokens < 1 || !pool_.allocate(id, tokens).ok()) return false;
  admitted_.insert(id);
  plan_.grants.push_back({id, tokens, GrantSource::kFresh, std::nullopt,
                          plan_.preempt_list.size()});
  return true;
}

void PlanBuilder::admit_embedded(RequestId id, const EmbedQuote& quote) {
  pool_.embed(id, quote);
  admitted_.insert(id);
  plan_.grants.push_back({id, quote.granted, GrantSource::kEmbedded, quote,
                          plan_.preempt_list.size()});
}

bool PlanBuilder::grow(RequestId id, Tokens tokens) {
  if (tokens < 1 || !pool_.grow(id, tokens, cfg_.buffer_b).ok()) return false;
  grown_.insert(id);
  plan_.grants.push_back({id, tokens, GrantSource::kGrowth, std::nullopt,
                          plan_.preempt_list.size()});
  return true;
}

bool PlanBuilder::draw_reserved(RequestId id, Tokens blocks) {
  if (blocks < 1 || !pool_.draw_reserved(id, blocks).ok()) return false;
  grown_.insert(id);
  plan_.grants.push_back({id, blocks * pool_.block_size(), GrantSource::kReserved,
                          std::nullopt, plan_.preempt_list.size()});
  return true;
}

void PlanBuilder::add_claim(RequestId claimant, RequestId releaser,
                            Tokens tokens) {
  plan_.claims.push_back({claimant, releaser, tokens});
}

Tokens PlanBuilder::fresh_capacity(Tokens want) const {
  return std::min(want, pool_.free_tokens());
}

Tokens PlanBuilder::growth_capacity(RequestId id, Tokens want) const {
  return std::min(want, pool_.max_growth(id, cfg_.buffer_b));
}

Tokens PlanBuilder::pending_prefill(const RequestView& r) {
  if (r.rt->generated > 0) return 0;
  return r.info->prompt_len - r.rt->prefilled;
}

void PlanBuilder::add_member(RequestId id, Tokens tokens, bool prefill) {
  if (tokens < 1 || members_.contains(id)) return;
  members_.insert(id);
  plan_.members.push_back({id, tokens, prefill});
  plan_.batch_tokens += tokens;
  if (prefill) plan_.prefill_tokens += tokens;
}

void PlanBuilder::finalize_members(Tokens chunk_budget) {
  std::vector<RequestView> running(view_.running.begin(), view_.running.end());
  std::sort(running.begin(), running.end(), arrived_before);
  for (const auto& r : running) {
    if (preempted_.contains(r.id()) || stalled(r)) continue;
    if (pending_prefill(r) > 0) continue;
    if (pool_.headroom(r.id()) >= 1) add_member(r.id(), 1, false);
  }
  auto prefill = [&](const RequestView& r) {
    Tokens tokens = pending_prefill(r);
    if (tokens <= 0) return;
    if (chunk_budget > 0) {
      tokens = std::min(tokens, std::max<Tokens>(0, chunk_budget - plan_.batch_tokens));
    }
    add_member(r.id(), tokens, true);
  };
  for (const auto& r : running) {
    if (!preempted_.contains(r.id()) && !stalled(r)) prefill(r);
  }
  for (const auto& g : plan_.grants) {
    if (admitted_.contains(g.id) && !preempted_.contains(g.id)) prefill(get(g.id));
  }
  plan_.overflow = plan_.batch_tokens > cfg_.token_budget;
}

}  // namespace internal

std::unique_ptr<Policy> make_policy(const SchedulerConfig& cfg,
                                    const IterationCost& cost, SweetSpot spot) {
  cfg.validate();
  switch (cfg.policy) {
    case PolicyKind::kCacheOpt:
      return internal::make_cacheopt(cfg, cost, spot);
    case PolicyKind::kVllmBlock:
      return internal::make_vllm(cfg, false);
    case PolicyKind::kSarathiChunked:
      return internal::make_vllm(cfg, true);
    case PolicyKind::kRlp:
      return internal::make_rlp(cfg);
    case PolicyKind::kS3:
      return internal::make_s3(cfg);
  }
  throw ContractViolation("make_policy: unknown policy");
}

}  // namespace kvsched
