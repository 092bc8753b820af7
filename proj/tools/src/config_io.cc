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

#include "config_io.h"

#include <fstream>
#include <set>

namespace kvsched::cli {

namespace {

using Json = nlohmann::ordered_json;

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  Section child(const std::string& key) { return Section(j_.at(key), field(key)); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = convert<T>(j_.at(key), key);
  }

  void get_ms(const std::string& key, Duration& out) {
    double ms = to_ms(out);
    get(key, ms);
    out = from_ms(ms);
  }

  void get_ms_list(const std::string& key, std::vector<Duration>& out) {
    if (!has(key)) return;
    const Json& v = j_.at(key);
    if (!v.is_array()) fail(key, "expected an array of numbers");
    out.clear();
    for (const auto& e : v) out.push_back(from_ms(convert<double>(e, key)));
  }

  // Rejects keys nobody asked for, which catches misspelled options.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) fail(key, "unknown key");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw InputError("config field '" + field(key) + "': " + what);
  }

 private:
  std::string field(const std::string& key) const {
    if (path_.empty()) return key;
    if (key.empty()) return path_;
    return path_ + "." + key;
  }

  template <typename T>
  T convert(const Json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(key, "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(key, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(key, "expected a number");
      return v.get<T>();
    } else {
      if (!v.is_string()) fail(key, "expected a string");
      return v.get<std::string>();
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string_view dist_kind_name(LengthDist::Kind k) {
  switch (k) {
    case LengthDist::Kind::kConstant:
      return "constant";
    case LengthDist::Kind::kLognormal:
      return "lognormal";
    case LengthDist::Kind::kEmpirical:
      return "empirical";
  }
  return "?";
}

std::string_view error_kind_name(ErrorModel::Kind k) {
  switch (k) {
    case ErrorModel::Kind::kPoint:
      return "point";
    case ErrorModel::Kind::kUniform:
      return "uniform";
    case ErrorModel::Kind::kNormal:
      return "normal";
  }
  return "?";
}

void read_dist(Section&& s, LengthDist& d) {
  if (s.has("kind")) {
    std::string kind;
    s.get("kind", kind);
    if (kind == "constant") {
      d.kind = LengthDist::Kind::kConstant;
    } else if (kind == "lognormal") {
      d.kind = LengthDist::Kind::kLognormal;
    } else if (kind == "empirical") {
      d.kind = LengthDist::Kind::kEmpirical;
    } else {
      s.fail("kind", "expected constant, lognormal or empirical, got '" + kind + "'");
    }
  }
  s.get("value", d.value);
  s.get("mean", d.mean);
  s.get("cv", d.cv);
  s.get("min", d.min);
  s.get("max", d.max);
  s.get("path", d.path);
  s.finish();
}

Json dist_json(const LengthDist& d) {
  Json j;
  j["kind"] = dist_kind_name(d.kind);
  j["value"] = d.value;
  j["mean"] = d.mean;
  j["cv"] = d.cv;
  j["min"] = d.min;
  j["max"] = d.max;
  j["path"] = d.path;
  return j;
}

void read_workload(Section&& s, SimConfig& cfg) {
  TraceSpec& w = cfg.workload;
  if (s.has("preset")) {
    std::string name;
    s.get("preset", name);
    const auto preset = parse_preset(name);
    if (!preset) {
      s.fail("preset", "expected Alpaca, ShareGPT or BookCorpus, got '" + name + "'");
    }
    const std::int64_t count = w.count;
    w = preset_spec(*preset);
    w.count = count;
  } else if (s.has("mean_rate") || s.has("prompt") || s.has("output")) {
    w.preset.reset();
  }
  s.get("mean_rate", w.mean_rate);
  s.get("count", w.count);
  s.get("max_prompt_len", w.max_prompt_len);
  if (s.has("prompt")) read_dist(s.child("prompt"), w.prompt_dist);
  if (s.has("output")) read_dist(s.child("output"), w.output_dist);
  s.get("trace_path", cfg.trace_path);
  s.finish();
}

void read_scheduler(Section&& s, SchedulerConfig& c) {
  if (s.has("policy")) {
    std::string name;
    s.get("policy", name);
    const auto p = parse_policy(name);
    if (!p) s.fail("policy", "unknown policy '" + name + "'");
    c.policy = *p;
  }
  auto order = [&](const std::string& key, VictimOrder& out) {
    if (!s.has(key)) return;
    std::string name;
    s.get(key, name);
    const auto v = parse_victim_order(name);
    if (!v) s.fail(key, "expected slo_aware, fcfs or self, got '" + name + "'");
    out = *v;
  };
  s.get("small_block_B", c.small_block_B);
  s.get_ms("epsilon_ms", c.epsilon);
  s.get("token_budget", c.token_budget);
  s.get("preallocate_m", c.preallocate_m);
  s.get("buffer_b", c.buffer_b);
  s.get("allow_stacking", c.allow_stacking);
  s.get("invert_amortization", c.invert_amortization);
  s.get("enable_embedding", c.enable_embedding);
  s.get("enable_reserve", c.enable_reserve);
  s.get("enable_pairing", c.enable_pairing);
  s.get("enable_proactive", c.enable_proactive);
  order("victim_order", c.victim_order);
  s.get_ms_list("slo_bucket_edges_ms", c.buckets.slo_edges);
  s.get("token_bucket", c.buckets.token_bucket);
  s.get("vllm_block", c.vllm_block);
  s.get("rlp_padding", c.rlp_padding);
  s.get("rlp_group_window", c.rlp_group_window);
  order("rlp_victim_order", c.rlp_victim_order);
  s.get("s3_bucket", c.s3_bucket);
  s.finish();
}

Json scheduler_json(const SchedulerConfig& c) {
  Json j;
  j["policy"] = to_string(c.policy);
  j["small_block_B"] = c.small_block_B;
  j["epsilon_ms"] = to_ms(c.epsilon);
  j["token_budget"] = c.token_budget;
  j["preallocate_m"] = c.preallocate_m;
  j["buffer_b"] = c.buffer_b;
  j["allow_stacking"] = c.allow_stacking;
  j["invert_amortization"] = c.invert_amortization;
  j["enable_embedding"] = c.enable_embedding;
  j["enable_reserve"] = c.enable_reserve;
  j["enable_pairing"] = c.enable_pairing;
  j["enable_proactive"] = c.enable_proactive;
  j["victim_order"] = to_string(c.victim_order);
  Json edges = Json::array();
  for (Duration d : c.buckets.slo_edges) edges.push_back(to_ms(d));
  j["slo_bucket_edges_ms"] = edges;
  j["token_bucket"] = c.buckets.token_bucket;
  j["vllm_block"] = c.vllm_block;
  j["rlp_padding"] = c.rlp_padding;
  j["rlp_group_window"] = c.rlp_group_window;
  j["rlp_victim_order"] = to_string(c.rlp_victim_order);
  j["s3_bucket"] = c.s3_bucket;
  return j;
}

void read_predictor(Section&& s, PredictorConfig& p) {
  s.get("bin_width", p.bin_width);
  s.get("direction_accuracy", p.direction_accuracy);
  s.get("seed", p.seed);
  if (s.has("error_model")) {
    Section e = s.child("error_model");
    ErrorModel& m = p.error_model;
    if (e.has("kind")) {
      std::string kind;
      e.get("kind", kind);
      if (kind == "point") {
        m.kind = ErrorModel::Kind::kPoint;
      } else if (kind == "uniform") {
        m.kind = ErrorModel::Kind::kUniform;
      } else if (kind == "normal") {
        m.kind = ErrorModel::Kind::kNormal;
      } else {
        e.fail("kind", "expected point, uniform or normal, got '" + kind + "'");
      }
    }
    e.get("value", m.value);
    e.get("lo", m.lo);
    e.get("hi", m.hi);
    e.get("sigma", m.sigma);
    e.get("relative", m.relative);
    e.finish();
  }
  s.finish();
}

Json predictor_json(const PredictorConfig& p) {
  Json j;
  j["bin_width"] = p.bin_width;
  j["direction_accuracy"] = p.direction_accuracy;
  j["seed"] = p.seed;
  Json e;
  e["kind"] = error_kind_name(p.error_model.kind);
  e["value"] = p.error_model.value;
  e["lo"] = p.error_model.lo;
  e["hi"] = p.error_model.hi;
  e["sigma"] = p.error_model.sigma;
  e["relative"] = p.error_model.relative;
  j["error_model"] = e;
  return j;
}

void read_costs(Section&& s, SimConfig& cfg) {
  if (s.has("iteration")) {
    Section it = s.child("iteration");
    it.get("base_ms", cfg.iteration.base_ms);
    it.get("per_token_ms", cfg.iteration.per_token_ms);
    it.get("prefill_multiplier", cfg.iteration.prefill_multiplier);
    it.finish();
  }
  if (s.has("swap")) {
    Section sw = s.child("swap");
    sw.get("gamma_s", cfg.truth.swap.gamma_s);
    sw.get("delta_s", cfg.truth.swap.delta_s);
    sw.finish();
  }
  if (s.has("recompute")) {
    Section r = s.child("recompute");
    r.get("alpha_r", cfg.truth.recompute.alpha_r);
    r.get("beta_r", cfg.truth.recompute.beta_r);
    r.get("kappa_r", cfg.truth.recompute.kappa_r);
    r.get("eps_r", cfg.truth.recompute.eps_r);
    r.finish();
  }
  s.get("swap_out_share", cfg.truth.swap_out_share);
  s.finish();
}

Json costs_json(const SimConfig& cfg) {
  Json j;
  j["iteration"] = {{"base_ms", cfg.iteration.base_ms},
                    {"per_token_ms", cfg.iteration.per_token_ms},
                    {"prefill_multiplier", cfg.iteration.prefill_multiplier}};
  j["swap"] = {{"gamma_s", cfg.truth.swap.gamma_s}, {"delta_s", cfg.truth.swap.delta_s}};
  j["recompute"] = {{"alpha_r", cfg.truth.recompute.alpha_r},
                    {"beta_r", cfg.truth.recompute.beta_r},
                    {"kappa_r", cfg.truth.recompute.kappa_r},
                    {"eps_r", cfg.truth.recompute.eps_r}};
  j["swap_out_share"] = cfg.truth.swap_out_share;
  return j;
}

}  // namespace

RunConfig default_config() {
  RunConfig c;
  SimConfig& s = c.sim;
  s.workload = preset_spec(Preset::kAlpaca);
  s.workload.count = 1000;
  return c;
}

RunConfig parse_config(const Json& doc) {
  RunConfig cfg = default_config();
  SimConfig& sim = cfg.sim;
  Section root(doc, "");
  root.get("seed", sim.seed);
  root.get("output_dir", cfg.output_dir);
  root.get("horizon_s", sim.horizon_s);
  root.get("max_idle_steps", sim.max_idle_steps);
  root.get("rate_window_s", sim.rate_window_s);
  root.get("trace_events", sim.trace_events);
  root.get("check_invariants", sim.check_invariants);
  if (root.has("workload")) read_workload(root.child("workload"), sim);
  if (root.has("slo")) {
    Section s = root.child("slo");
    s.get("scale_lo", sim.slo.scale_lo);
    s.get("scale_hi", sim.slo.scale_hi);
    s.get_ms("baseline_ttft_ms", sim.slo.baseline_ttft);
    s.get_ms("baseline_tbt_ms", sim.slo.baseline_tbt);
    s.get("chunk_token_budget", sim.slo.chunk_token_budget);
    s.finish();
  }
  if (root.has("scheduler")) read_scheduler(root.child("scheduler"), sim.scheduler);
  if (root.has("predictor")) read_predictor(root.child("predictor"), sim.predictor);
  if (root.has("confidence")) {
    Section s = root.child("confidence");
    s.get("alpha", sim.confidence.alpha);
    s.get("beta", sim.confidence.beta);
    s.get("clamp_lo", sim.confidence.clamp_lo);
    s.get("clamp_hi", sim.confidence.clamp_hi);
    s.finish();
  }
  if (root.has("costs")) read_costs(root.child("costs"), sim);
  if (root.has("pool")) {
    Section s = root.child("pool");
    s.get("capacity", sim.pool.capacity);
    s.get("block_size", sim.pool.block_size);
    s.get("reserved_blocks", sim.pool.reserved_blocks);
    s.finish();
  }
  if (root.has("profile")) {
    Section s = root.child("profile");
    s.get("use_truth", sim.profile.use_truth);
    s.get("noise_sigma_rel", sim.profile.noise_sigma_rel);
    s.get("s_min", sim.profile.s_min);
    s.get("s_max", sim.profile.s_max);
    s.get("points", sim.profile.points);
    s.finish();
  }
  root.finish();
  sim.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFile(path);
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config: " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

Json to_json(const RunConfig& cfg) {
  const SimConfig& sim = cfg.sim;
  Json j;
  j["seed"] = sim.seed;
  j["output_dir"] = cfg.output_dir;
  j["horizon_s"] = sim.horizon_s;
  j["max_idle_steps"] = sim.max_idle_steps;
  j["rate_window_s"] = sim.rate_window_s;
  j["trace_events"] = sim.trace_events;
  j["check_invariants"] = sim.check_invariants;

  Json w;
  if (sim.workload.preset) {
    w["preset"] = to_string(*sim.workload.preset);
  } else {
    w["preset"] = nullptr;
  }
  w["mean_rate"] = sim.workload.mean_rate;
  w["count"] = sim.workload.count;
  w["max_prompt_len"] = sim.workload.max_prompt_len;
  w["prompt"] = dist_json(sim.workload.prompt_dist);
  w["output"] = dist_json(sim.workload.output_dist);
  w["trace_path"] = sim.trace_path;
  j["workload"] = w;

  j["slo"] = {{"scale_lo", sim.slo.scale_lo},
              {"scale_hi", sim.slo.scale_hi},
              {"baseline_ttft_ms", to_ms(sim.slo.baseline_ttft)},
              {"baseline_tbt_ms", to_ms(sim.slo.baseline_tbt)},
              {"chunk_token_budget", sim.slo.chunk_token_budget}};
  j["scheduler"] = scheduler_json(sim.scheduler);
  j["predictor"] = predictor_json(sim.predictor);
  j["confidence"] = {{"alpha", sim.confidence.alpha},
                     {"beta", sim.confidence.beta},
                     {"clamp_lo", sim.confidence.clamp_lo},
                     {"clamp_hi", sim.confidence.clamp_hi}};
  j["costs"] = costs_json(sim);
  j["pool"] = {{"capacity", sim.pool.capacity},
               {"block_size", sim.pool.block_size},
               {"reserved_blocks", sim.pool.reserved_blocks}};
  j["profile"] = {{"use_truth", sim.profile.use_truth},
                  {"noise_sigma_rel", sim.profile.noise_sigma_rel},
                  {"s_min", sim.profile.s_min},
                  {"s_max", sim.profile.s_max},
                  {"points", sim.profile.points}};
  return j;
}

}  // namespace kvsched::cli
