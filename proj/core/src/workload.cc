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

#include "kvsched/workload.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kvsched {

namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

[[noreturn]] void bad_input(std::string_view field, std::string_view what) {
  throw InputError(std::string(field) + ": " + std::string(what));
}

Tokens draw(const LengthDist& d, const std::optional<TruncatedLognormal>& ln,
            Rng& rng) {
  switch (d.kind) {
    case LengthDist::Kind::kConstant:
      return d.value;
    case LengthDist::Kind::kLognormal:
      return ln->sample(rng);
    case LengthDist::Kind::kEmpirical:
      return d.values[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(d.values.size()) - 1))];
  }
  return d.value;
}

std::optional<TruncatedLognormal> make_sampler(const LengthDist& d) {
  if (d.kind != LengthDist::Kind::kLognormal) return std::nullopt;
  return TruncatedLognormal(d.mean, d.cv, d.min, d.max);
}

}  // namespace

void LengthDist::validate(std::string_view field) const {
  switch (kind) {
    case Kind::kConstant:
      if (value < 1) bad_input(field, "constant length must be >= 1");
      break;
    case Kind::kLognormal:
      if (min < 1 || max < min) bad_input(field, "need 1 <= min <= max");
      if (!(mean >= static_cast<double>(min) &&
            mean <= static_cast<double>(max))) {
        bad_input(field, "mean must lie within [min, max]");
      }
      if (!(cv > 0.0)) bad_input(field, "cv must be > 0");
      break;
    case Kind::kEmpirical:
      if (values.empty() && path.empty()) {
        bad_input(field, "empirical distribution needs a path");
      }
      break;
  }
}

std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::kAlpaca:
      return "Alpaca";
    case Preset::kShareGpt:
      return "ShareGPT";
    case Preset::kBookCorpus:
      return "BookCorpus";
  }
  return "?";
}

std::optional<Preset> parse_preset(std::string_view name) {
  if (name == "Alpaca") return Preset::kAlpaca;
  if (name == "ShareGPT") return Preset::kShareGpt;
  if (name == "BookCorpus") return Preset::kBookCorpus;
  return std::nullopt;
}

void TraceSpec::validate() const {
  if (!(mean_rate > 0.0)) throw InputError("workload.mean_rate must be > 0");
  if (count < 1) throw InputError("workload.count must be >= 1");
  if (max_prompt_len < 1) throw InputError("workload.max_prompt_len must be >= 1");
  prompt_dist.validate("workload.prompt_dist");
  output_dist.validate("workload.output_dist");
}

TraceSpec preset_spec(Preset preset) {
  auto lognormal = [](double mean, Tokens lo, Tokens hi) {
    LengthDist d;
    d.kind = LengthDist::Kind::kLognormal;
    d.mean = mean;
    d.min = lo;
    d.max = hi;
    return d;
  };
  TraceSpec s;
  s.preset = preset;
  switch (preset) {
    case Preset::kAlpaca:
      s.mean_rate = 32.0;
      s.prompt_dist = lognormal(19.31, 9, 2470);
      s.output_dist = lognormal(58.41, 13, 292);
      break;
    case Preset::kShareGpt:
      s.mean_rate = 28.0;
      s.prompt_dist = lognormal(161.31, 16, 3200);
      s.output_dist = lognormal(337.99, 19, 991);
      break;
    case Preset::kBookCorpus:
      s.mean_rate = 1.2;
      s.prompt_dist = lognormal(1952.11, 18, 461000);
      s.output_dist = lognormal(681.2, 32, 1041);
      break;
  }
  return s;
}

TruncatedLognormal::TruncatedLognormal(double mean, double cv, Tokens min,
                                       Tokens max)
    : sigma_(std::sqrt(std::log1p(cv * cv))),
      lo_(std::log(static_cast<double>(min) - 0.5 > 0.0
                       ? static_cast<double>(min) - 0.5
                       : static_cast<double>(min))),
      hi_(std::log(static_cast<double>(max) + 0.5)),
      min_(min),
      max_(max) {
  if (min < 1 || max < min || !(cv > 0.0)) {
    throw ContractViolation("TruncatedLognormal: bad parameters");
  }
  // truncated_mean is increasing in mu; bracket and bisect.
  double a = lo_ - 10.0 * sigma_;
  double b = hi_ + 10.0 * sigma_;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (a + b);
    if (truncated_mean(mid) < mean) {
      a = mid;
    } else {
      b = mid;
    }
  }
  mu_ = 0.5 * (a + b);
}

double TruncatedLognormal::truncated_mean(double mu) const {
  const double s = sigma_;
  const double mass = std_normal_cdf((hi_ - mu) / s) - std_normal_cdf((lo_ - mu) / s);
  if (mass <= 0.0) {
    return mu < lo_ ? std::exp(lo_) : std::exp(hi_);
  }
  const double partial = std_normal_cdf((hi_ - mu - s * s) / s) -
                         std_normal_cdf((lo_ - mu - s * s) / s);
  return std::exp(mu + 0.5 * s * s) * partial / mass;
}

Tokens TruncatedLognormal::sample(Rng& rng) const {
  for (;;) {
    const double x = std::exp(rng.normal(mu_, sigma_));
    const auto t = static_cast<Tokens>(std::llround(x));
    if (t >= min_ && t <= max_) return t;
  }
}

std::vector<Request> generate(const TraceSpec& spec, std::uint64_t seed) {
  spec.validate();
  LengthDist prompt = spec.prompt_dist;
  LengthDist output = spec.output_dist;
  if (prompt.kind == LengthDist::Kind::kEmpirical) load_empirical(prompt);
  if (output.kind == LengthDist::Kind::kEmpirical) load_empirical(output);
  const auto prompt_ln = make_sampler(prompt);
  const auto output_ln = make_sampler(output);

  Rng arrivals = Rng::stream(seed, 1);
  Rng prompts = Rng::stream(seed, 2);
  Rng outputs = Rng::stream(seed, 3);

  std::vector<Request> trace;
  trace.reserve(static_cast<std::size_t>(spec.count));
  double t_seconds = 0.0;
  for (std::int64_t i = 0; i < spec.count; ++i) {
    t_seconds += arrivals.exponential(spec.mean_rate);
    Request r;
    r.info.id = RequestId{static_cast<std::uint64_t>(i)};
    r.info.arrival = kSimEpoch + from_seconds(t_seconds);
    r.info.prompt_len =
        std::min(draw(prompt, prompt_ln, prompts), spec.max_prompt_len);
    r.true_output_len = draw(output, output_ln, outputs);
    trace.push_back(r);
  }
  return trace;
}

void load_empirical(LengthDist& dist) {
  if (!dist.values.empty()) return;
  std::ifstream in(dist.path);
  if (!in) throw InputError("cannot open length file: " + dist.path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    Tokens v = 0;
    if (!(is >> v) || v < 1) {
      std::ostringstream os;
      os << dist.path << ":" << line_no << ": expected a positive length";
      throw InputError(os.str());
    }
    dist.values.push_back(v);
  }
  if (dist.values.empty()) throw InputError("empty length file: " + dist.path);
}

std::vector<Request> ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trace file: " + path);
  std::vector<Request> trace;
  std::string line;
  int line_no = 0;
  std::int64_t last_arrival = 0;
  auto fail = [&](std::string_view what) {
    std::ostringstream os;
    os << path << ":" << line_no << ": " << what;
    throw InputError(os.str());
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.find_first_not_of("0123456789,- \t") !=
                            std::string::npos) {
      continue;  // header
    }
    std::istringstream is(line);
    std::int64_t arrival = 0;
    Tokens prompt = 0;
    Tokens output = 0;
    char c1 = 0;
    char c2 = 0;
    if (!(is >> arrival >> c1 >> prompt >> c2 >> output) || c1 != ',' ||
        c2 != ',') {
      fail("expected arrival_us,prompt_len,output_len");
    }
    std::string rest;
    if (is >> rest) fail("trailing fields");
    if (arrival < 0) fail("negative arrival");
    if (prompt < 1) fail("prompt_len must be >= 1");
    if (output < 1) fail("output_len must be >= 1");
    if (arrival < last_arrival) fail("arrivals are not in order");
    last_arrival = arrival;
    Request r;
    r.info.id = RequestId{static_cast<std::uint64_t>(trace.size())};
    r.info.arrival = at_us(arrival);
    r.info.prompt_len = prompt;
    r.true_output_len = output;
    trace.push_back(r);
  }
  return trace;
}

void SloPolicy::validate() const {
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) {
    throw InputError("slo.scale_range must satisfy 0 < lo <= hi");
  }
  if (chunk_token_budget < 1) {
    throw InputError("slo.chunk_token_budget must be >= 1");
  }
}

void assign_slos(std::vector<Request>& trace, const SloPolicy& policy,
                 Rng& rng) {
  policy.validate();
  if (policy.baseline_ttft <= Duration::zero() ||
      policy.baseline_tbt <= Duration::zero()) {
    throw ContractViolation("assign_slos: baselines must be positive");
  }
  for (Request& r : trace) {
    const double u = rng.uniform(policy.scale_lo, policy.scale_hi);
    const double u2 = rng.uniform(policy.scale_lo, policy.scale_hi);
    const auto chunks = ceil_div(r.info.prompt_len, policy.chunk_token_budget);
    const double ttft_us = static_cast<double>(policy.baseline_ttft.count()) *
                           u * static_cast<double>(chunks);
    const double tbt_us = static_cast<double>(policy.baseline_tbt.count()) * u2;
    r.info.slo_ttft = Duration{std::max<std::int64_t>(1, std::llround(ttft_us))};
    r.info.slo_tbt = Duration{std::max<std::int64_t>(1, std::llround(tbt_us))};
  }
}

}  // namespace kvsched
