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

#include "commands.h"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "kvsched/costmodel.h"
#include "kvsched/preemption.h"

namespace kvsched::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

void require_file(const std::string& path) {
  if (!path.empty() && !fs::exists(path)) throw MissingFile(path);
}

void require_inputs(const SimConfig& cfg) {
  require_file(cfg.trace_path);
  if (cfg.trace_path.empty()) {
    for (const LengthDist* d : {&cfg.workload.prompt_dist, &cfg.workload.output_dist}) {
      if (d->kind == LengthDist::Kind::kEmpirical) require_file(d->path);
    }
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << content;
  if (!out) throw InputError("failed writing " + path.string());
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw InputError("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

std::string valid_policy_names() {
  std::string names;
  for (auto p : {PolicyKind::kCacheOpt, PolicyKind::kVllmBlock, PolicyKind::kRlp,
                 PolicyKind::kS3, PolicyKind::kSarathiChunked}) {
    if (!names.empty()) names += ", ";
    names += to_string(p);
  }
  return names;
}

PolicyKind policy_or_throw(const std::string& name) {
  const auto p = parse_policy(name);
  if (!p) {
    throw InputError("unknown policy '" + name + "'; valid names: " + valid_policy_names());
  }
  return *p;
}

std::string events_jsonl(const std::vector<Event>& events) {
  std::string out;
  for (const auto& e : events) {
    out += to_json_line(e);
    out += '\n';
  }
  return out;
}

std::string metrics_csv(const MetricsReport& m) {
  return csv_header() + "\n" + to_csv_row(m) + "\n";
}

// Options shared by run and compare.
struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool trace_events = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON run config; defaults apply when omitted");
  cmd->add_option("--seed", o.seed, "Override the config seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_flag("--trace-events", o.trace_events, "Write the event log as events.jsonl");
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? default_config() : load_config(o.config);
  if (o.seed) cfg.sim.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.trace_events) cfg.sim.trace_events = true;
  cfg.sim.validate();
  require_inputs(cfg.sim);
  return cfg;
}

int cmd_run(const CommonOptions& o, const std::optional<std::string>& policy,
            std::ostream& out) {
  RunConfig cfg = resolve(o);
  if (policy) cfg.sim.scheduler.policy = policy_or_throw(*policy);
  const RunResult r = run(cfg.sim);
  const fs::path dir = prepare_dir(cfg.output_dir);
  write_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
  write_file(dir / "metrics.json", to_json(r.metrics) + "\n");
  write_file(dir / "metrics.csv", metrics_csv(r.metrics));
  if (cfg.sim.trace_events) write_file(dir / "events.jsonl", events_jsonl(r.events));
  out << to_json(r.metrics) << "\n";
  return 0;
}

int cmd_compare(const CommonOptions& o, const std::vector<std::string>& names,
                std::ostream& out) {
  if (names.size() < 2) throw InputError("compare needs at least two --policy values");
  std::vector<PolicyKind> policies;
  for (const auto& n : names) policies.push_back(policy_or_throw(n));
  RunConfig cfg = resolve(o);
  const fs::path dir = prepare_dir(cfg.output_dir);

  // Calibrate once so every row is judged against the same SLOs.
  SimConfig base = cfg.sim;
  std::string table = "policy," + csv_header() + "\n";
  for (std::size_t i = 0; i < policies.size(); ++i) {
    SimConfig sim = base;
    sim.scheduler.policy = policies[i];
    const RunResult r = run(sim);
    if (i == 0) {
      base.slo.baseline_ttft = r.baseline_ttft;
      base.slo.baseline_tbt = r.baseline_tbt;
    }
    const std::string name(to_string(policies[i]));
    table += name + "," + to_csv_row(r.metrics) + "\n";
    if (cfg.sim.trace_events) {
      write_file(dir / ("events_" + std::to_string(i) + "_" + name + ".jsonl"),
                 events_jsonl(r.events));
    }
  }
  RunConfig saved = cfg;
  saved.sim = base;
  write_file(dir / "config.json", to_json(saved).dump(2) + "\n");
  write_file(dir / "compare.csv", table);
  out << table;
  return 0;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw InputError("sweep value '" + item + "' is not a number");
    values.push_back(v);
  }
  if (values.empty()) throw InputError("sweep needs at least one value");
  return values;
}

std::vector<ProfileSample> read_samples(const std::string& path) {
  require_file(path);
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::vector<ProfileSample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.find("seq_len") != std::string::npos) continue;
    std::istringstream is(line);
    ProfileSample s;
    char comma = 0;
    std::string rest;
    if (!(is >> s.seq_len >> comma >> s.latency_ms) || comma != ',' || (is >> rest)) {
      throw InputError(path + ":" + std::to_string(line_no) +
                       ": expected seq_len,latency_ms");
    }
    samples.push_back(s);
  }
  return samples;
}

std::string samples_csv(const std::vector<ProfileSample>& samples) {
  std::ostringstream os;
  os.precision(17);
  os << "seq_len,latency_ms\n";
  for (const auto& s : samples) os << s.seq_len << ',' << s.latency_ms << '\n';
  return os.str();
}

}  // namespace

SimConfig apply_axis(const SimConfig& base, std::string_view axis, double value) {
  SimConfig c = base;
  auto as_int = [&](std::string_view what) {
    const auto n = static_cast<std::int64_t>(value);
    if (static_cast<double>(n) != value) {
      throw InputError("sweep axis " + std::string(what) + " needs integer values");
    }
    return n;
  };
  if (axis == "fixed_padding") {
    c.scheduler.policy = PolicyKind::kRlp;
    c.scheduler.rlp_padding = as_int(axis);
  } else if (axis == "arrival_rate") {
    c.workload.mean_rate = value;
  } else if (axis == "confidence") {
    c.confidence.alpha = value;
    c.confidence.beta = 0.0;
  } else if (axis == "block_size") {
    c.scheduler.small_block_B = as_int(axis);
    c.pool.block_size = as_int(axis);
  } else if (axis == "reserved_blocks") {
    c.pool.reserved_blocks = as_int(axis);
  } else if (axis == "m") {
    c.scheduler.preallocate_m = static_cast<int>(as_int(axis));
  } else {
    std::string names;
    for (auto a : kSweepAxes) names += (names.empty() ? "" : ", ") + std::string(a);
    throw InputError("unknown sweep axis '" + std::string(axis) + "'; valid axes: " + names);
  }
  c.validate();
  return c;
}

std::vector<SweepRow> run_sweep(const SimConfig& base, std::string_view axis,
                                const std::vector<double>& values,
                                const std::vector<std::uint64_t>& seeds, unsigned threads) {
  if (values.empty()) throw InputError("sweep needs at least one value");
  if (seeds.empty()) throw InputError("sweep needs at least one seed");
  std::vector<SimConfig> jobs;
  std::vector<SweepRow> rows;
  for (double v : values) {
    for (std::uint64_t seed : seeds) {
      SimConfig c = apply_axis(base, axis, v);
      c.seed = seed;
      c.trace_events = false;
      jobs.push_back(c);
      rows.push_back(SweepRow{v, seed, std::string(to_string(c.scheduler.policy)), {}});
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        rows[i].metrics = run(jobs[i]).metrics;
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return rows;
}

std::string sweep_csv_header() { return "axis,value,seed,policy," + csv_header(); }

std::string sweep_csv_row(std::string_view axis, const SweepRow& row) {
  std::ostringstream os;
  os.precision(10);
  os << axis << ',' << row.value << ',' << row.seed << ',' << row.policy << ','
     << to_csv_row(row.metrics);
  return os.str();
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discrete-event simulator for KV-cache constrained LLM serving"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  std::optional<std::string> run_policy;
  auto* run_cmd = app.add_subcommand("run", "Simulate one configuration");
  add_common(run_cmd, run_opts);
  run_cmd->add_option("--policy", run_policy, "Override the scheduler policy");

  CommonOptions cmp_opts;
  std::vector<std::string> cmp_policies;
  auto* cmp_cmd = app.add_subcommand("compare", "Run several policies on one workload");
  add_common(cmp_cmd, cmp_opts);
  cmp_cmd->add_option("--policy", cmp_policies, "Policies to compare (repeat or list)")
      ->delimiter(',');

  CommonOptions sw_opts;
  std::string axis;
  std::string values_text;
  int seed_count = 5;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::string> sw_policy;
  auto* sw_cmd = app.add_subcommand("sweep", "Sweep one parameter over several seeds");
  add_common(sw_cmd, sw_opts);
  sw_cmd->add_option("--policy", sw_policy, "Override the scheduler policy");
  sw_cmd->add_option("--axis", axis, "fixed_padding, arrival_rate, confidence, block_size, "
                                     "reserved_blocks or m")
      ->required();
  sw_cmd->add_option("--values", values_text, "Comma separated values")->required();
  sw_cmd->add_option("--seeds", seed_count, "Seeds per value, counting up from --seed")
      ->check(CLI::PositiveNumber);
  sw_cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string swap_csv;
  std::string recompute_csv;
  std::optional<std::string> fit_out;
  auto* fit_cmd = app.add_subcommand("fit", "Fit cost regressors from seq_len,latency_ms CSVs");
  fit_cmd->add_option("--swap", swap_csv, "Swap latency samples");
  fit_cmd->add_option("--recompute", recompute_csv, "Recompute latency samples");
  fit_cmd->add_option("--out", fit_out, "Write the JSON here instead of stdout");

  CommonOptions prof_opts;
  auto* prof_cmd = app.add_subcommand("profile", "Emit noisy latency samples from the cost model");
  add_common(prof_cmd, prof_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitBadInput;
  }

  try {
    if (*run_cmd) return cmd_run(run_opts, run_policy, out);
    if (*cmp_cmd) return cmd_compare(cmp_opts, cmp_policies, out);
    if (*sw_cmd) {
      RunConfig cfg = resolve(sw_opts);
      if (sw_policy) cfg.sim.scheduler.policy = policy_or_throw(*sw_policy);
      const auto values = parse_values(values_text);
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < seed_count; ++i) seeds.push_back(cfg.sim.seed + i);
      const auto rows = run_sweep(cfg.sim, axis, values, seeds, threads);
      std::string csv = sweep_csv_header() + "\n";
      for (const auto& r : rows) csv += sweep_csv_row(axis, r) + "\n";
      const fs::path dir = prepare_dir(cfg.output_dir);
      write_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
      write_file(dir / "sweep.csv", csv);
      out << csv;
      return 0;
    }
    if (*fit_cmd) {
      if (swap_csv.empty() && recompute_csv.empty()) {
        throw InputError("fit needs --swap and/or --recompute");
      }
      Json j;
      std::optional<SwapModel> swap;
      std::optional<RecomputeModel> rec;
      if (!swap_csv.empty()) {
        swap = fit_swap(read_samples(swap_csv));
        j["swap"] = {{"gamma_s", swap->gamma_s}, {"delta_s", swap->delta_s}};
      }
      if (!recompute_csv.empty()) {
        rec = fit_recompute(read_samples(recompute_csv));
        j["recompute"] = {{"alpha_r", rec->alpha_r},
                          {"beta_r", rec->beta_r},
                          {"kappa_r", rec->kappa_r},
                          {"eps_r", rec->eps_r}};
      }
      if (swap && rec) {
        const SweetSpot spot = sweet_spot(*rec, *swap);
        j["sweet_spot"] = {{"s_star", spot.s_star}, {"root", spot.root}};
      }
      const std::string text = j.dump(2) + "\n";
      if (fit_out) {
        write_file(*fit_out, text);
      } else {
        out << text;
      }
      return 0;
    }
    if (*prof_cmd) {
      const RunConfig cfg = resolve(prof_opts);
      const auto s = cfg.sim.profile.s_values();
      Rng rng = Rng::stream(cfg.sim.seed, 7);
      const Profile p = sample_profile(cfg.sim.truth, s, cfg.sim.profile.noise_sigma_rel, rng);
      const fs::path dir = prepare_dir(cfg.output_dir);
      write_file(dir / "swap.csv", samples_csv(p.swap));
      write_file(dir / "recompute.csv", samples_csv(p.recompute));
      out << "wrote " << (dir / "swap.csv").string() << " and "
          << (dir / "recompute.csv").string() << "\n";
      return 0;
    }
  } catch (const MissingFile& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissingFile;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const ContractViolation& e) {
    err << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  return kExitBadInput;
}

}  // namespace kvsched::cli
