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

// Prints one PASS/FAIL line per acceptance criterion and exits nonzero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "kvsched/engine.h"
#include "support/oracles.h"
#include "support/pool_fuzz.h"

namespace kvsched {
namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && first_failure_.empty()) first_failure_ = what;
    pass_ = pass_ && ok;
  }
  void note(const std::string& s) {
    if (!notes_.empty()) notes_ += "; ";
    notes_ += s;
  }
  Verdict verdict() const {
    return {pass_, pass_ ? notes_ : first_failure_ + (notes_.empty() ? "" : " | " + notes_)};
  }

 private:
  bool pass_ = true;
  std::string first_failure_;
  std::string notes_;
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Criterion 1: padded estimates under-provision at most 1 - c of the time.
Verdict hoeffding_guarantee() {
  const auto t0 = std::chrono::steady_clock::now();
  const double c = 0.9;
  PredictorConfig cfg;
  cfg.bin_width = 50;
  cfg.error_model.kind = ErrorModel::Kind::kUniform;
  cfg.error_model.lo = 0.0;
  cfg.error_model.hi = 49.0;
  Rng rng(11);
  Rng lens(12);
  const int n = 10000;
  int short_count = 0;
  int wrong_direction = 0;
  for (int i = 0; i < n; ++i) {
    Request r;
    r.info.id = RequestId{static_cast<std::uint64_t>(i)};
    r.info.prompt_len = 16;
    r.true_output_len = lens.uniform_int(60, 600);
    const Prediction p = predict(r, cfg, rng);
    wrong_direction += p.direction != Direction::kUnder;
    const LengthEstimate e = make_estimate(p, c);
    short_count += r.true_output_len > e.estimated_len;
  }
  const double frac = static_cast<double>(short_count) / n;
  const double secs = seconds_since(t0);
  Check check;
  check.expect(wrong_direction == 0, "direction flipped with accuracy 1");
  check.expect(frac <= 0.12, "underprovision fraction " + fmt(frac) + " > 0.12");
  check.expect(secs < 5.0, "took " + fmt(secs) + " s");
  check.note("underprovisioned " + fmt(frac) + ", " + fmt(secs) + " s");
  return check.verdict();
}

// Criterion 2: default coefficients cross at 4000 tokens.
Verdict sweet_spot_anchor() {
  const auto t0 = std::chrono::steady_clock::now();
  const TruthCosts truth;
  const SweetSpot s = sweet_spot(truth.recompute, truth.swap);
  const double secs = seconds_since(t0);
  Check check;
  check.expect(std::abs(s.s_star - 4000) <= 1, "s_star " + std::to_string(s.s_star));
  check.expect(choose_strategy(s.s_star, s) == PreemptStrategy::kRecompute &&
                   choose_strategy(s.s_star + 1, s) == PreemptStrategy::kSwap,
               "strategy does not flip at s_star");
  check.expect(secs < 1.0, "took " + fmt(secs) + " s");
  check.note("s_star " + std::to_string(s.s_star) + ", root " + fmt(s.root));
  return check.verdict();
}

// Criterion 3: fitted regressors recover the generating coefficients.
Verdict regressor_recovery() {
  const TruthCosts truth;
  const std::vector<Tokens> s_values = ProfileConfig{}.s_values();
  Check check;
  Rng none(0);
  const Profile exact = sample_profile(truth, s_values, 0.0, none);
  const SwapModel sw = fit_swap(exact.swap);
  const RecomputeModel rc = fit_recompute(exact.recompute);
  const auto rel = [](double got, double want) { return std::abs(got - want) / std::abs(want); };
  check.expect(rel(sw.gamma_s, truth.swap.gamma_s) <= 1e-9 &&
                   rel(sw.delta_s, truth.swap.delta_s) <= 1e-9,
               "noiseless swap fit off by more than 1e-9");
  check.expect(rel(rc.alpha_r, truth.recompute.alpha_r) <= 0.01,
               "noiseless alpha_r off by " + fmt(rel(rc.alpha_r, truth.recompute.alpha_r), 4));
  check.expect(std::abs(rc.beta_r - truth.recompute.beta_r) <= 0.02,
               "noiseless beta_r " + fmt(rc.beta_r, 4));
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const Profile p = sample_profile(truth, s_values, 0.01, rng);
    const SwapModel nsw = fit_swap(p.swap);
    const RecomputeModel nrc = fit_recompute(p.recompute);
    for (double e : {rel(nsw.gamma_s, truth.swap.gamma_s), rel(nsw.delta_s, truth.swap.delta_s),
                     rel(nrc.alpha_r, truth.recompute.alpha_r),
                     rel(nrc.beta_r, truth.recompute.beta_r)}) {
      worst = std::max(worst, e);
    }
  }
  check.expect(worst <= 0.05, "1% noise worst relative error " + fmt(worst, 4));
  check.note("noisy worst relative error " + fmt(worst, 4));
  return check.verdict();
}

SimConfig zero_error_config(std::uint64_t seed) {
  SimConfig cfg;
  cfg.workload = preset_spec(Preset::kAlpaca);
  cfg.workload.count = 1000;
  cfg.seed = seed;
  cfg.trace_events = true;
  return cfg;
}

// Criterion 4: allocator invariants under random operations, and no
// collisions when predictions are exact.
Verdict allocator_safety() {
  Check check;
  std::int64_t ops = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const fuzz::FuzzStats s = fuzz::fuzz_pool(seed, 250'000);
    ops += s.ops;
    check.expect(s.violation.empty(), "fuzz seed " + std::to_string(seed) + ": " + s.violation);
    check.expect(s.embeds > 0 && s.grows > 0 && s.releases > 0,
                 "fuzz seed " + std::to_string(seed) + " skipped an operation kind");
  }
  check.note(std::to_string(ops) + " pool operations");
  std::int64_t embedded = 0;
  std::int64_t collisions = 0;
  for (Tokens capacity : {2048, 4096, 8192}) {
    SimConfig cfg = zero_error_config(1);
    cfg.pool.capacity = capacity;
    const RunResult r = run(cfg);
    collisions += r.metrics.collisions;
    check.expect(r.metrics.completed == r.metrics.requests,
                 "zero-error run left requests incomplete");
    for (const auto& e : r.events) {
      embedded += e.kind == "grant" && e.detail.find(" host=") != std::string::npos;
    }
  }
  check.expect(collisions == 0, std::to_string(collisions) + " collisions with exact predictions");
  check.expect(embedded > 0, "no embedded allocation exercised");
  check.note(std::to_string(embedded) + " embedded grants, 0 collisions");
  return check.verdict();
}

// Criterion 5: proportional amortization is exact.
Verdict amortization_exactness() {
  Rng rng(505);
  Check check;
  const int instances = 20000;
  for (int iter = 0; iter < instances; ++iter) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 16));
    std::vector<AmortizeInput> reqs;
    for (std::size_t i = 0; i < n; ++i) {
      reqs.push_back({RequestId{static_cast<std::uint64_t>(rng.uniform_int(0, 5000))},
                      Duration{rng.uniform_int(1, 10'000'000)}, rng.uniform_int(1, 8000),
                      Tokens{1} << 30});
    }
    const Tokens a = rng.uniform_int(0, 200'000);
    const bool invert = rng.bernoulli(0.5);
    const auto got = amortize(reqs, a, invert);
    Tokens sum = 0;
    for (Tokens g : got) sum += g;
    if (sum != a) {
      check.expect(false, "sum " + std::to_string(sum) + " != " + std::to_string(a));
      break;
    }
    if (got != oracle::amortize(reqs, a, invert)) {
      check.expect(false, "oracle mismatch at instance " + std::to_string(iter));
      break;
    }
    auto scaled = reqs;
    const std::int64_t k = rng.uniform_int(2, 500);
    for (auto& r : scaled) r.rt = r.rt * k;
    if (amortize(scaled, a, invert) != got) {
      check.expect(false, "RT scaling changed instance " + std::to_string(iter));
      break;
    }
  }
  check.note(std::to_string(instances) + " instances");
  return check.verdict();
}

// Criterion 6: the victim order is a total order.
Verdict preemption_order_totality() {
  Check check;
  const VictimBuckets buckets;
  const VictimCandidate example[] = {
      {RequestId{0}, kSimEpoch, std::chrono::milliseconds(600), 200, 300},
      {RequestId{1}, kSimEpoch, std::chrono::milliseconds(300), 500, 100},
      {RequestId{2}, kSimEpoch, std::chrono::milliseconds(1000), 400, 150}};
  check.expect(order_victims(example, buckets) ==
                   std::vector<RequestId>{RequestId{2}, RequestId{0}, RequestId{1}},
               "worked example is not [C, A, B]");
  Rng rng(606);
  const int sets = 10000;
  for (int iter = 0; iter < sets; ++iter) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 32));
    std::vector<VictimCandidate> set;
    for (std::size_t i = 0; i < n; ++i) {
      set.push_back({RequestId{i}, at_us(rng.uniform_int(0, 5)),
                     std::chrono::milliseconds(rng.uniform_int(1, 8) * 100),
                     rng.uniform_int(0, 700), rng.uniform_int(1, 8) * 16});
    }
    const auto expect = oracle::order_victims(set, buckets);
    bool same = true;
    for (int p = 0; p < 3 && same; ++p) {
      for (std::size_t i = set.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(set[i - 1], set[j]);
      }
      same = order_victims(set, buckets) == expect;
    }
    if (!same) {
      check.expect(false, "order depends on input permutation, set " + std::to_string(iter));
      break;
    }
  }
  check.note(std::to_string(sets) + " random sets");
  return check.verdict();
}

// The high-load Alpaca scenario: 32 req/s into a 3072-token pool with a
// noisy length predictor.
SimConfig high_load(PolicyKind p, std::uint64_t seed) {
  SimConfig cfg;
  cfg.workload = preset_spec(Preset::kAlpaca);
  cfg.workload.mean_rate = 32.0;
  cfg.workload.count = 1000;
  cfg.predictor.bin_width = 50;
  cfg.predictor.error_model.kind = ErrorModel::Kind::kNormal;
  cfg.predictor.error_model.sigma = 0.4;
  cfg.predictor.error_model.lo = -0.8;
  cfg.predictor.error_model.hi = 0.8;
  cfg.predictor.error_model.relative = true;
  cfg.confidence.alpha = 8.0;
  cfg.confidence.beta = 100.0;
  cfg.pool.capacity = 3072;
  cfg.scheduler.policy = p;
  cfg.seed = seed;
  return cfg;
}

constexpr std::uint64_t kSeeds = 5;

struct Means {
  double ttft = 0.0;
  double tbt = 0.0;
  double preemptions = 0.0;
  double preemption_ms = 0.0;
  double waiting_ms = 0.0;
  double latency_ms = 0.0;
  double slowest_run_s = 0.0;
};

Means seed_means(const std::function<SimConfig(std::uint64_t)>& make) {
  Means m;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunResult r = run(make(seed));
    m.slowest_run_s = std::max(m.slowest_run_s, seconds_since(t0));
    m.ttft += r.metrics.ttft_attainment / kSeeds;
    m.tbt += r.metrics.tbt_attainment / kSeeds;
    m.preemptions += static_cast<double>(r.metrics.preemption_count) / kSeeds;
    m.preemption_ms += to_ms(r.metrics.preemption_time_mean) / kSeeds;
    m.waiting_ms += r.metrics.waiting_time_mean_ms / kSeeds;
    m.latency_ms += r.metrics.latency_mean_ms / kSeeds;
  }
  return m;
}

// Criterion 7: fixed padding trades preemption time for waiting time.
Verdict padding_tradeoff() {
  const Tokens paddings[] = {0, 25, 50, 100, 200};
  std::vector<Means> rows;
  for (Tokens pad : paddings) {
    rows.push_back(seed_means([pad](std::uint64_t seed) {
      SimConfig cfg = high_load(PolicyKind::kRlp, seed);
      cfg.pool.capacity = 8192;
      cfg.scheduler.rlp_padding = pad;
      return cfg;
    }));
  }
  Check check;
  std::string pre = "preemption ms";
  std::string wait = "waiting ms";
  std::string lat = "latency ms";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    pre += " " + fmt(rows[i].preemption_ms, 1);
    wait += " " + fmt(rows[i].waiting_ms, 1);
    lat += " " + fmt(rows[i].latency_ms, 1);
    if (i == 0) continue;
    check.expect(rows[i].preemption_ms <= rows[i - 1].preemption_ms,
                 "preemption time rises at padding " + std::to_string(paddings[i]));
    check.expect(rows[i].waiting_ms >= rows[i - 1].waiting_ms,
                 "waiting time falls at padding " + std::to_string(paddings[i]));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].latency_ms < rows[best].latency_ms) best = i;
  }
  check.expect(best != 0 && best != rows.size() - 1, "latency minimum at an endpoint");
  check.note(pre + "; " + wait + "; " + lat);
  return check.verdict();
}

// Criterion 8: FCFS victim selection preempts more than the SLO-aware order.
Verdict victim_order_direction() {
  const Means aware = seed_means([](std::uint64_t s) { return high_load(PolicyKind::kCacheOpt, s); });
  const Means fcfs = seed_means([](std::uint64_t s) {
    SimConfig cfg = high_load(PolicyKind::kCacheOpt, s);
    cfg.scheduler.victim_order = VictimOrder::kLastArrived;
    return cfg;
  });
  Check check;
  check.expect(fcfs.preemptions >= 1.1 * aware.preemptions,
               "FCFS/SLO-aware preemption ratio " + fmt(fcfs.preemptions / aware.preemptions));
  check.note("FCFS " + fmt(fcfs.preemptions, 1) + " vs SLO-aware " + fmt(aware.preemptions, 1) +
             " preemptions");
  return check.verdict();
}

// Criterion 9: CacheOpt against the VllmBlock and Rlp baselines.
Verdict policy_comparison() {
  const auto means = [](PolicyKind p) {
    return seed_means([p](std::uint64_t s) { return high_load(p, s); });
  };
  const Means ours = means(PolicyKind::kCacheOpt);
  Check check;
  double slowest = ours.slowest_run_s;
  std::string summary = "CacheOpt ttft " + fmt(ours.ttft) + " tbt " + fmt(ours.tbt) +
                        " preemptions " + fmt(ours.preemptions, 1);
  for (PolicyKind base : {PolicyKind::kVllmBlock, PolicyKind::kRlp}) {
    const Means b = means(base);
    const std::string name(to_string(base));
    slowest = std::max(slowest, b.slowest_run_s);
    summary += "; " + name + " ttft " + fmt(b.ttft) + " tbt " + fmt(b.tbt) + " preemptions " +
               fmt(b.preemptions, 1);
    check.expect(ours.ttft > b.ttft, "TTFT attainment not above " + name);
    check.expect(ours.tbt > b.tbt, "TBT attainment not above " + name);
    check.expect(ours.preemptions <= 0.8 * b.preemptions,
                 "preemptions not 20% below " + name);
  }
  check.expect(slowest <= 30.0, "slowest run " + fmt(slowest, 1) + " s");
  check.note(summary + "; slowest run " + fmt(slowest, 1) + " s");
  return check.verdict();
}

std::string dump(const RunResult& r) {
  std::string out = to_json(r.metrics);
  for (const auto& e : r.events) out += to_json_line(e) + "\n";
  return out;
}

// Criterion 10: equal seeds give byte-identical logs and reports.
Verdict determinism() {
  Check check;
  std::size_t bytes = 0;
  for (PolicyKind p : {PolicyKind::kCacheOpt, PolicyKind::kVllmBlock, PolicyKind::kRlp,
                       PolicyKind::kS3, PolicyKind::kSarathiChunked}) {
    SimConfig cfg = high_load(p, 3);
    cfg.workload.count = 400;
    cfg.trace_events = true;
    const std::string a = dump(run(cfg));
    const std::string b = dump(run(cfg));
    bytes += a.size();
    check.expect(a == b, std::string(to_string(p)) + " replay differs");
  }
  check.note(std::to_string(bytes) + " bytes compared per replay");
  return check.verdict();
}

}  // namespace
}  // namespace kvsched

int main() {
  using namespace kvsched;
  struct Criterion {
    const char* name;
    Verdict (*fn)();
  };
  const Criterion criteria[] = {
      {"Hoeffding padding bound", hoeffding_guarantee},
      {"sweet spot anchor", sweet_spot_anchor},
      {"regressor recovery", regressor_recovery},
      {"allocator safety", allocator_safety},
      {"amortization exactness", amortization_exactness},
      {"preemption order totality", preemption_order_totality},
      {"padding trade-off", padding_tradeoff},
      {"FCFS victim direction", victim_order_direction},
      {"policy comparison", policy_comparison},
      {"determinism", determinism},
  };
  int failed = 0;
  int index = 1;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s criterion %d: %s (%s) [%.1f s]\n", v.pass ? "PASS" : "FAIL", index++, c.name,
                v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
