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

#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kvsched/costmodel.h"
#include "kvsched/kvc.h"
#include "kvsched/preemption.h"
#include "kvsched/request.h"

namespace kvsched {

enum class PolicyKind { kCacheOpt, kVllmBlock, kRlp, kS3, kSarathiChunked };

std::string_view to_string(PolicyKind p);
std::optional<PolicyKind> parse_policy(std::string_view name);
std::vector<std::string_view> policy_names();

// Which running request a policy evicts first.
enum class VictimOrder { kSloAware, kLastArrived, kSelf };

std::string_view to_string(VictimOrder v);
std::optional<VictimOrder> parse_victim_order(std::string_view name);

struct SchedulerConfig {
  PolicyKind policy = PolicyKind::kCacheOpt;
  Tokens small_block_B = 8;
  Duration epsilon = std::chrono::milliseconds(1);
  Tokens token_budget = 2048;
  int preallocate_m = 2;
  Tokens buffer_b = 8;
  bool allow_stacking = false;
  bool invert_amortization = false;

  // CacheOpt mechanisms, each switchable for ablations.
  bool enable_embedding = true;
  bool enable_reserve = true;
  bool enable_pairing = true;
  bool enable_proactive = true;
  VictimOrder victim_order = VictimOrder::kSloAware;
  VictimBuckets buckets;

  // Baseline knobs.
  Tokens vllm_block = 32;
  Tokens rlp_padding = 100;
  Tokens rlp_group_window = 64;
  VictimOrder rlp_victim_order = VictimOrder::kSelf;
  Tokens s3_bucket = 50;

  void validate() const;
};

// What a policy sees of the system. Queued requests hold no KVC; the
// engine keeps swapped-out requests out of the queue until their swap-out
// has finished.
struct SchedulerView {
  SimTime now;
  std::span<const RequestView> queue;
  std::span<const RequestView> running;
  const BlockPool* pool = nullptr;
  Duration t_i_max{0};
};

enum class GrantSource { kFresh, kEmbedded, kReserved, kGrowth, kPairedRelease };

std::string_view to_string(GrantSource g);

enum class PreemptReason { kMakeRoom, kSelf, kCollision };

std::string_view to_string(PreemptReason r);

struct PlanPreemption {
  RequestId id;
  PreemptStrategy strategy = PreemptStrategy::kRecompute;
  PreemptReason reason = PreemptReason::kMakeRoom;
};

// Fresh and kEmbedded grants admit a queued request; kGrowth and kReserved
// extend a live allocation (kReserved tokens are whole blocks).
struct PlanGrant {
  RequestId id;
  Tokens tokens = 0;
  GrantSource source = GrantSource::kFresh;
  std::optional<EmbedQuote> embed;
  // Number of preempt_list entries that were planned before this grant.
  // Replaying in that interleaving reproduces the planner's pool exactly.
  std::size_t after_preemptions = 0;
};

// claimant receives up to `tokens` of releaser's KVC when releaser completes.
struct PlanClaim {
  RequestId claimant;
  RequestId releaser;
  Tokens tokens = 0;
};

struct BatchMember {
  RequestId id;
  Tokens tokens = 1;
  bool prefill = false;
};

struct BatchPlan {
  std::vector<PlanPreemption> preempt_list;
  std::vector<PlanGrant> grants;
  std::vector<BatchMember> members;
  std::vector<PlanClaim> claims;
  // Critical requests that could not be funded this iteration.
  std::vector<RequestId> deferred;
  // Hosts whose own usage reached a guest's region this iteration.
  std::vector<RequestId> collisions;
  Tokens batch_tokens = 0;
  Tokens prefill_tokens = 0;
  bool overflow = false;
};

// Requests still to run, by criticality. Queued requests go to the w sets;
// running requests that exhausted their grant go to the r sets.
struct CriticalSets {
  std::vector<RequestId> n_w;
  std::vector<RequestId> n_r;
  std::vector<RequestId> n_w_prime;
  std::vector<RequestId> n_r_prime;
};

struct ClassifyInput {
  RequestId id;
  Duration remaining;  // RT against the governing SLO
  bool exhausted = false;  // only meaningful for running requests
};

// Critical iff remaining - t_i_max < epsilon. Running requests with spare
// grant are skipped entirely.
CriticalSets classify_critical(std::span<const ClassifyInput> queued,
                               std::span<const ClassifyInput> running,
                               Duration t_i_max, Duration epsilon);

// sum over n_w of (prompt + B) plus |n_r| * B.
Tokens basic_demand(std::span<const Tokens> n_w_prompts, std::size_t n_r_count,
                    Tokens small_block_B);

inline Tokens ensure_capacity(Tokens pool_free, Tokens d_kvc) {
  return std::max<Tokens>(0, d_kvc - pool_free);
}

struct BudgetCandidate {
  RequestId id;
  Tokens tokens = 0;
};

// First-fit over candidates in the given order against the budget left
// after `used` tokens. Returns the selected ids.
std::vector<RequestId> fill_token_budget(std::span<const BudgetCandidate> ordered,
                                         Tokens used, Tokens token_budget);

struct AmortizeInput {
  RequestId id;
  Duration rt{0};
  Tokens prompt = 1;
  Tokens demand = 0;  // M_i, the cap when capping is requested
};

// Shares of a_prime proportional to w_i = (RT_i / sum RT)(s_p_i / sum s_p)
// (or its reciprocal when inverted). Floors first, then the leftover goes one
// token at a time to the largest fractional remainders, ties by id. The
// result always sums to a_prime. RT below one microsecond counts as one.
std::vector<Tokens> amortize(std::span<const AmortizeInput> reqs, Tokens a_prime,
                             bool invert = false);

// amortize, but no grant exceeds its demand; the excess is re-spread over
// the uncapped requests. Sums to min(a_prime, sum of demands).
std::vector<Tokens> amortize_capped(std::span<const AmortizeInput> reqs,
                                    Tokens a_prime, bool invert = false);

struct PairCandidate {
  RequestId id;
  Tokens remaining_iters = 0;  // estimated iterations to completion
  Tokens footprint = 0;        // top-level tokens freed at completion
};

// Best fit among releasers finishing no later than the claimant exhausts
// and freeing at least `needed`: smallest footprint, then soonest, then id.
std::optional<RequestId> pair_release(Tokens exhaust_iters, Tokens needed,
                                      std::span<const PairCandidate> running);

struct ProactiveCandidate {
  RequestId id;
  Tokens remaining_iters = 0;
  bool unfulfilled = false;
};

std::vector<RequestId> proactive_include(
    std::span<const ProactiveCandidate> running, int m);

// Estimated tokens still to generate (at least one for a live request).
Tokens estimated_remaining(const RequestView& r);
// context + estimated remaining: the request's full KVC demand.
Tokens full_demand(const RequestView& r);

class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyKind kind() const = 0;
  // Pure: identical views give identical plans.
  virtual BatchPlan plan(const SchedulerView& view) const = 0;
};

std::unique_ptr<Policy> make_policy(const SchedulerConfig& cfg,
                                    const IterationCost& cost, SweetSpot spot);

}  // namespace kvsched
