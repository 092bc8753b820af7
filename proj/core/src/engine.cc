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

#include "kvsched/engine.h"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>

namespace kvsched {

void PoolConfig::validate() const {
  if (block_size < 1) throw InputError("pool.block_size must be >= 1");
  if (reserved_blocks < 0) throw InputError("pool.reserved_blocks must be >= 0");
  if (capacity < (reserved_blocks + 1) * block_size) {
    throw InputError("pool.capacity must exceed the reserve by at least a block");
  }
}

void ProfileConfig::validate() const {
  if (noise_sigma_rel < 0.0) throw InputError("profile.noise_sigma_rel must be >= 0");
  if (s_min < 1 || s_max <= s_min) {
    throw InputError("profile needs 1 <= s_min < s_max");
  }
  if (points < 8) throw InputError("profile.points must be >= 8");
}

std::vector<Tokens> ProfileConfig::s_values() const {
  std::vector<Tokens> out;
  const double step =
      static_cast<double>(s_max - s_min) / static_cast<double>(points - 1);
  for (int i = 0; i < points; ++i) {
    out.push_back(s_min + static_cast<Tokens>(std::llround(step * i)));
  }
  return out;
}

void SimConfig::validate() const {
  if (trace_path.empty()) workload.validate();
  slo.validate();
  scheduler.validate();
  predictor.validate();
  confidence.validate();
  iteration.validate();
  truth.validate();
  pool.validate();
  profile.validate();
  if (horizon_s < 0.0) throw InputError("horizon_s must be >= 0");
  if (max_idle_steps < 1) throw InputError("max_idle_steps must be >= 1");
  if (!(rate_window_s > 0.0)) throw InputError("rate_window_s must be > 0");
}

std::string to_json_line(const Event& e) {
  nlohmann::ordered_json j;
  j["t"] = to_us(e.t);
  j["kind"] = e.kind;
  if (e.request) {
    j["request"] = e.request->value;
  } else {
    j["request"] = nullptr;
  }
  j["detail"] = e.detail;
  return j.dump();
}

SweetSpot derive_sweet_spot(const SimConfig& cfg) {
  if (cfg.profile.use_truth) {
    return sweet_spot(cfg.truth.recompute, cfg.truth.swap);
  }
  Rng rng = Rng::stream(cfg.seed, 7);
  const auto s_values = cfg.profile.s_values();
  const Profile p =
      sample_profile(cfg.truth, s_values, cfg.profile.noise_sigma_rel, rng);
  return sweet_spot(fit_recompute(p.recompute), fit_swap(p.swap));
}

namespace {

PredictorConfig seeded(PredictorConfig pc, std::uint64_t seed) {
  pc.seed = Rng::stream(seed, 0x707265640000ULL ^ pc.seed).next_u64();
  return pc;
}

SimTime default_horizon(const SimConfig& cfg, const std::vector<Request>& trace) {
  if (cfg.horizon_s > 0.0) return kSimEpoch + from_seconds(cfg.horizon_s);
  const Duration span =
      trace.empty() ? Duration::zero() : trace.back().info.arrival - kSimEpoch;
  return kSimEpoch + std::max<Duration>(span * 10, from_seconds(60.0));
}

}  // namespace

Engine::Engine(const SimConfig& cfg, std::vector<Request> trace, SweetSpot spot)
    : cfg_(cfg),
      trace_(std::move(trace)),
      rt_(trace_.size()),
      policy_(make_policy(cfg.scheduler, cfg.iteration, spot)),
      predictor_(seeded(cfg.predictor, cfg.seed)),
      pool_(cfg.pool.capacity, cfg.pool.block_size, cfg.pool.reserved_blocks),
      spot_(spot),
      horizon_(default_horizon(cfg, trace_)),
      t_i_max_(iteration_latency(cfg.iteration, cfg.scheduler.token_budget)) {
  for (std::size_t i = 0; i < trace_.size(); ++i) {
    validate(trace_[i]);
    if (trace_[i].info.id.value != i) {
      throw ContractViolation("engine: trace ids must be 0..n-1 in order");
    }
    if (i > 0 && trace_[i].info.arrival < trace_[i - 1].info.arrival) {
      throw ContractViolation("engine: trace must be sorted by arrival");
    }
    RequestOutcome o;
    o.id = trace_[i].info.id;
    o.arrival = trace_[i].info.arrival;
    o.prompt_len = trace_[i].info.prompt_len;
    o.output_len = trace_[i].true_output_len;
    o.slo_ttft = trace_[i].info.slo_ttft;
    o.slo_tbt = trace_[i].info.slo_tbt;
    outcomes_.push_back(std::move(o));
  }
}

const RequestRuntime& Engine::runtime(RequestId id) const {
  return rt_.at(static_cast<std::size_t>(id.value));
}

bool Engine::done() const {
  return completed_ == static_cast<std::int64_t>(trace_.size()) || now_ >= horizon_;
}

void Engine::log(SimTime t, std::string kind, std::optional<RequestId> id,
                 std::string detail) {
  if (!cfg_.trace_events) return;
  events_.push_back({t, std::move(kind), id, std::move(detail)});
}

void Engine::abort_run(const std::string& why) const {
  std::ostringstream os;
  os << "engine aborted at t=" << to_us(now_) << "us: " << why
     << "\nqueue=" << queue_.size() << " running=" << running_.size()
     << " swapping=" << swapping_.size() << " free=" << pool_.free_tokens()
     << " reserve_blocks=" << pool_.reserved_blocks();
  for (const auto& [id, rec] : pool_.records()) {
    os << "\n  alloc " << id << " granted=" << rec.granted << " used=" << rec.used
       << " footprint=" << rec.footprint;
    if (rec.host) os << " host=" << *rec.host << " offset=" << rec.embed_offset;
  }
  throw ContractViolation(os.str());
}

void Engine::admit_arrivals() {
  const Duration window = from_seconds(cfg_.rate_window_s);
  while (next_arrival_ < trace_.size() &&
         trace_[next_arrival_].info.arrival <= now_) {
    const Request& req = trace_[next_arrival_];
    RequestRuntime& rt = rt_[next_arrival_];
    recent_arrivals_.push_back(req.info.arrival);
    while (recent_arrivals_.front() + window < req.info.arrival) {
      recent_arrivals_.pop_front();
    }
    const double rate =
        static_cast<double>(recent_arrivals_.size()) / cfg_.rate_window_s;
    const double c = adaptive_confidence(cfg_.confidence, rate);
    rt.estimate = make_estimate(predictor_.predict(req), c);
    queue_.insert(req.info.id);
    std::ostringstream os;
    os << "prompt=" << req.info.prompt_len << " estimate=" << rt.estimate->estimated_len;
    log(req.info.arrival, "arrive", req.info.id, os.str());
    ++next_arrival_;
  }
}

void Engine::release_swapped() {
  while (!swapping_.empty() && swapping_.begin()->first <= now_) {
    queue_.insert(swapping_.begin()->second);
    swapping_.erase(swapping_.begin());
  }
}

void Engine::sync(RequestId id) {
  RequestRuntime& rt = rt_[id.value];
  if (const auto* rec = pool_.find(id)) {
    rt.allocated_kvc = rec->granted;
    rt.used_kvc = rec->used;
  } else {
    rt.allocated_kvc = 0;
    rt.used_kvc = 0;
  }
}

void Engine::apply_preemption(const PlanPreemption& p) {
  const RequestId id = p.id;
  if (!running_.contains(id)) abort_run("plan preempts a request that is not running");
  RequestRuntime& rt = rt_[id.value];
  const Request& req = trace_[id.value];
  pool_.release(id);
  running_.erase(id);
  // Drop any pairing this request took part in.
  claims_.erase(id);
  for (auto it = claims_.begin(); it != claims_.end();) {
    it = it->second.claimant == id ? claims_.erase(it) : std::next(it);
  }

  const Tokens ctx = context_len(req.info, rt);
  PreemptStrategy strategy = p.strategy;
  Duration resume_cost{0};
  Duration swap_out{0};
  if (rt.generated == 0) {
    // Nothing to keep yet: the partial prefill is simply dropped.
    strategy = PreemptStrategy::kRecompute;
    rt.prefilled = 0;
  } else if (strategy == PreemptStrategy::kSwap) {
    resume_cost = swap_in_latency(cfg_.truth, ctx);
    swap_out = swap_out_latency(cfg_.truth, ctx);
  } else {
    resume_cost = recompute_latency(cfg_.truth, ctx);
  }
  transition(rt, state::Preempted{strategy, resume_cost}, now_);
  if (strategy == PreemptStrategy::kSwap) {
    swapping_.emplace(now_ + swap_out, id);
  } else {
    queue_.insert(id);
  }
  sync(id);
  std::ostringstream os;
  os << "strategy=" << to_string(strategy) << " reason=" << to_string(p.reason)
     << " context=" << ctx;
  log(now_, "preempt", id, os.str());
}

void Engine::start_running(RequestId id) {
  RequestRuntime& rt = rt_[id.value];
  queue_.erase(id);
  running_.insert(id);
  if (!rt.first_scheduled_at) {
    rt.first_scheduled_at = now_;
    outcomes_[id.value].first_scheduled_at = now_;
  }
  const bool resuming = rt.preempted();
  transition(rt, state::Running{}, now_);
  if (resuming && rt.generated > 0) {
    // The KV state comes back (swap-in or recompute) before decoding resumes.
    pool_.consume(id, context_len(trace_[id.value].info, rt));
  }
}

void Engine::apply_grant(const PlanGrant& g) {
  AllocResult res;
  switch (g.source) {
    case GrantSource::kFresh:
      if (!queue_.contains(g.id)) abort_run("fresh grant for a request not queued");
      res = pool_.allocate(g.id, g.tokens);
      if (res.ok()) start_running(g.id);
      break;
    case GrantSource::kEmbedded:
      if (!queue_.contains(g.id) || !g.embed) abort_run("bad embedded grant");
      pool_.embed(g.id, *g.embed);
      start_running(g.id);
      break;
    case GrantSource::kGrowth:
      res = pool_.grow(g.id, g.tokens, cfg_.scheduler.buffer_b);
      break;
    case GrantSource::kReserved:
      res = pool_.draw_reserved(g.id, g.tokens / pool_.block_size());
      break;
    case GrantSource::kPairedRelease:
      abort_run("paired-release grants are applied at completion");
  }
  if (!res.ok()) {
    std::ostringstream os;
    os << "plan replay failed: " << to_string(g.source) << " grant of " << g.tokens
       << " tokens to request " << g.id << " is short by " << res.missing;
    abort_run(os.str());
  }
  sync(g.id);
  std::ostringstream os;
  os << "source=" << to_string(g.source) << " tokens=" << g.tokens;
  if (g.embed) os << " host=" << g.embed->host << " offset=" << g.embed->start_offset;
  log(now_, "grant", g.id, os.str());
}

void Engine::emit_token(RequestId id, SimTime at) {
  RequestRuntime& rt = rt_[id.value];
  pool_.consume(id, 1);
  ++rt.generated;
  if (rt.last_token_at) rt.max_tbt = std::max(rt.max_tbt, at - *rt.last_token_at);
  if (!rt.first_token_at) {
    rt.first_token_at = at;
    log(at, "first_token", id, "");
  }
  rt.last_token_at = at;
  outcomes_[id.value].token_times.push_back(at);
}

void Engine::complete(RequestId id, SimTime at) {
  RequestRuntime& rt = rt_[id.value];
  pool_.release(id);
  running_.erase(id);
  transition(rt, state::Completed{}, at);
  rt.completed_at = at;
  ++completed_;
  RequestOutcome& o = outcomes_[id.value];
  o.completed_at = at;
  o.preemption_count = rt.preemption_count;
  o.preemption_time = rt.preemption_time_total;
  sync(id);
  log(at, "complete", id, "");

  // Hand the freed space to requests paired with this one.
  auto [lo, hi] = claims_.equal_range(id);
  std::vector<PlanClaim> claims;
  for (auto it = lo; it != hi; ++it) claims.push_back(it->second);
  claims_.erase(lo, hi);
  for (const auto& c : claims) {
    if (!running_.contains(c.claimant) || !pool_.contains(c.claimant)) continue;
    const Tokens room = pool_.max_growth(c.claimant, cfg_.scheduler.buffer_b);
    const Tokens give = std::min(c.tokens, room);
    if (give < 1) continue;
    if (!pool_.grow(c.claimant, give, cfg_.scheduler.buffer_b).ok()) continue;
    sync(c.claimant);
    std::ostringstream os;
    os << "source=" << to_string(GrantSource::kPairedRelease) << " tokens=" << give
       << " releaser=" << id;
    log(at, "grant", c.claimant, os.str());
  }
}

void Engine::advance_idle() {
  SimTime next = horizon_;
  if (next_arrival_ < trace_.size()) {
    next = std::min(next, trace_[next_arrival_].info.arrival);
  }
  if (!swapping_.empty()) next = std::min(next, swapping_.begin()->first);
  for (RequestId id : running_) {
    const SimTime s = rt_[id.value].stall_until;
    if (s > now_) next = std::min(next, s);
  }
  if (next <= now_) {
    // Nothing scheduled to change: let time pass so deadlines can turn
    // requests critical.
    next = now_ + t_i_max_;
  }
  if (++idle_steps_ > cfg_.max_idle_steps) {
    abort_run("no progress for max_idle_steps steps");
  }
  now_ = next;
}

void Engine::check_state() const {
  pool_.check_invariants();
  for (RequestId id : running_) {
    const RequestRuntime& rt = rt_[id.value];
    if (!rt.running()) abort_run("running set holds a non-running request");
    if (rt.used_kvc > rt.allocated_kvc) abort_run("used_kvc exceeds allocated_kvc");
    if (rt.generated > trace_[id.value].true_output_len) {
      abort_run("request generated past its output length");
    }
  }
}

void Engine::step() {
  admit_arrivals();
  release_swapped();
  if (queue_.empty() && running_.empty()) {
    advance_idle();
    return;
  }

  std::vector<RequestView> queue;
  std::vector<RequestView> running;
  for (RequestId id : queue_) queue.push_back({&trace_[id.value].info, &rt_[id.value]});
  for (RequestId id : running_) {
    running.push_back({&trace_[id.value].info, &rt_[id.value]});
  }
  SchedulerView view{now_, queue, running, &pool_, t_i_max_};
  const BatchPlan plan = policy_->plan(view);

  std::size_t pi = 0;
  for (const auto& g : plan.grants) {
    while (pi < g.after_preemptions) apply_preemption(plan.preempt_list[pi++]);
    apply_grant(g);
  }
  while (pi < plan.preempt_list.size()) apply_preemption(plan.preempt_list[pi++]);
  for (const auto& c : plan.claims) {
    claims_.emplace(c.releaser, c);
    std::ostringstream os;
    os << "releaser=" << c.releaser << " tokens=" << c.tokens;
    log(now_, "pair", c.claimant, os.str());
  }
  counters_.forced_violations += static_cast<std::int64_t>(plan.deferred.size());
  for (RequestId id : plan.deferred) log(now_, "defer", id, "forced_violation");
  counters_.collisions += static_cast<std::int64_t>(plan.collisions.size());
  for (RequestId id : plan.collisions) log(now_, "collision", id, "");

  if (plan.members.empty()) {
    if (cfg_.check_invariants) check_state();
    advance_idle();
    return;
  }
  idle_steps_ = 0;

  Tokens prefill = 0;
  Tokens decode = 0;
  for (const auto& m : plan.members) (m.prefill ? prefill : decode) += m.tokens;
  const Duration latency = iteration_latency(cfg_.iteration, prefill, decode);
  const SimTime end = now_ + latency;

  std::vector<RequestId> finished;
  for (const auto& m : plan.members) {
    if (!running_.contains(m.id)) abort_run("batch member is not running");
    RequestRuntime& rt = rt_[m.id.value];
    if (rt.stall_until > now_) abort_run("batch member is still stalled");
    if (m.prefill) {
      pool_.consume(m.id, m.tokens);
      rt.prefilled += m.tokens;
      if (rt.prefilled > trace_[m.id.value].info.prompt_len) {
        abort_run("prefill past the prompt");
      }
      if (rt.prefilled == trace_[m.id.value].info.prompt_len) emit_token(m.id, end);
    } else {
      emit_token(m.id, end);
    }
    sync(m.id);
    if (rt.generated == trace_[m.id.value].true_output_len) finished.push_back(m.id);
  }
  for (RequestId id : finished) complete(id, end);

  if (cfg_.trace_events) {
    std::ostringstream os;
    os << "members=" << plan.members.size() << " prefill=" << prefill
       << " decode=" << decode << " latency_us=" << latency.count()
       << " free=" << pool_.free_tokens()
       << " reserve_blocks=" << pool_.reserved_blocks();
    log(now_, "iteration", std::nullopt, os.str());
    for (const auto& [id, rec] : pool_.records()) {
      std::ostringstream kv;
      kv << "owner=" << id << " granted=" << rec.granted << " used=" << rec.used;
      if (rec.host) kv << " host=" << *rec.host << " offset=" << rec.embed_offset;
      log(end, "kvc", id, kv.str());
    }
  }

  now_ = end;
  t_i_max_ = std::max(t_i_max_, latency);
  ++counters_.iterations;
  const auto cap = static_cast<double>(pool_.capacity());
  counters_.kvc_utilization_sum += static_cast<double>(pool_.used_tokens()) / cap;
  counters_.fragmentation_sum += static_cast<double>(pool_.fragmentation_tokens()) / cap;
  ++counters_.samples;
  if (cfg_.check_invariants) check_state();
}

RunResult Engine::finish() {
  for (std::size_t i = 0; i < trace_.size(); ++i) {
    RequestOutcome& o = outcomes_[i];
    if (!o.completed_at) {
      o.preemption_count = rt_[i].preemption_count;
      o.preemption_time = rt_[i].preemption_time_total;
    }
  }
  counters_.end = now_;
  RunResult r;
  r.metrics = compute_metrics(outcomes_, counters_);
  r.events = std::move(events_);
  r.outcomes = std::move(outcomes_);
  r.spot = spot_;
  r.baseline_ttft = cfg_.slo.baseline_ttft;
  r.baseline_tbt = cfg_.slo.baseline_tbt;
  return r;
}

RunResult run_trace(const SimConfig& cfg, std::vector<Request> trace) {
  cfg.validate();
  Engine engine(cfg, std::move(trace), derive_sweet_spot(cfg));
  while (!engine.done()) engine.step();
  return engine.finish();
}

std::vector<Request> build_trace(const SimConfig& cfg) {
  if (!cfg.trace_path.empty()) return ingest(cfg.trace_path);
  return generate(cfg.workload, cfg.seed);
}

RunResult run(const SimConfig& cfg) {
  cfg.validate();
  std::vector<Request> trace = build_trace(cfg);
  SimConfig effective = cfg;
  if (effective.slo.baseline_ttft <= Duration::zero() ||
      effective.slo.baseline_tbt <= Duration::zero()) {
    SimConfig calib = cfg;
    calib.scheduler.policy = PolicyKind::kVllmBlock;
    calib.trace_events = false;
    std::vector<Request> loose = trace;
    for (auto& r : loose) {
      r.info.slo_ttft = from_seconds(3600.0);
      r.info.slo_tbt = from_seconds(3600.0);
    }
    const RunResult base = run_trace(calib, std::move(loose));
    Duration ttft_sum{0};
    Duration tbt_sum{0};
    std::int64_t ttft_n = 0;
    std::int64_t tbt_n = 0;
    for (const auto& o : base.outcomes) {
      if (o.token_times.empty()) continue;
      ttft_sum += o.token_times.front() - o.arrival;
      ++ttft_n;
      for (std::size_t i = 1; i < o.token_times.size(); ++i) {
        tbt_sum += o.token_times[i] - o.token_times[i - 1];
        ++tbt_n;
      }
    }
    if (effective.slo.baseline_ttft <= Duration::zero()) {
      effective.slo.baseline_ttft =
          std::max(Duration{1}, ttft_n > 0 ? ttft_sum / ttft_n : iteration_latency(cfg.iteration, cfg.scheduler.token_budget));
    }
    if (effective.slo.baseline_tbt <= Duration::zero()) {
      effective.slo.baseline_tbt =
          std::max(Duration{1}, tbt_n > 0 ? tbt_sum / tbt_n : iteration_latency(cfg.iteration, cfg.scheduler.token_budget));
    }
  }
  Rng slo_rng = Rng::stream(cfg.seed, 4);
  assign_slos(trace, effective.slo, slo_rng);
  return run_trace(effective, std::move(trace));
}

}  // namespace kvsched
