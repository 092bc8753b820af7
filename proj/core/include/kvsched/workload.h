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

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kvsched/request.h"
#include "kvsched/rng.h"

namespace kvsched {

struct LengthDist {
  enum class Kind { kConstant, kLognormal, kEmpirical };

  Kind kind = Kind::kConstant;
  Tokens value = 1;  // kConstant
  double mean = 1.0;  // kLognormal: mean after truncation
  double cv = 1.0;    // kLognormal: coefficient of variation before truncation
  Tokens min = 1;
  Tokens max = 1 << 20;
  std::string path;  // kEmpirical: one length per line
  std::vector<Tokens> values;  // kEmpirical, loaded from path

  void validate(std::string_view field) const;
};

enum class Preset { kAlpaca, kShareGpt, kBookCorpus };

std::string_view to_string(Preset p);
std::optional<Preset> parse_preset(std::string_view name);

struct TraceSpec {
  double mean_rate = 1.0;  // requests per second
  std::int64_t count = 1;
  LengthDist prompt_dist;
  LengthDist output_dist;
  std::optional<Preset> preset;
  // Prompts beyond the context length are clipped to it.
  Tokens max_prompt_len = 2048;

  void validate() const;
};

// Arrival rate and lognormal lengths matching the preset's published means
// and bounds. The count is left to the caller.
TraceSpec preset_spec(Preset preset);

// Sampler for a truncated lognormal with a given post-truncation mean.
class TruncatedLognormal {
 public:
  TruncatedLognormal(double mean, double cv, Tokens min, Tokens max);

  Tokens sample(Rng& rng) const;
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }
  // Analytic mean of the continuous truncated distribution.
  double truncated_mean(double mu) const;

 private:
  double sigma_;
  double lo_;
  double hi_;
  Tokens min_;
  Tokens max_;
  double mu_ = 0.0;
};

// Poisson arrivals and independent lengths; SLOs are left at placeholders
// until assign_slos runs. Deterministic per seed.
std::vector<Request> generate(const TraceSpec& spec, std::uint64_t seed);

// CSV with columns arrival_us, prompt_len, output_len and an optional
// header row. Throws InputError naming the offending line.
std::vector<Request> ingest(const std::string& path);

// Loads an empirical length distribution file into dist.values.
void load_empirical(LengthDist& dist);

struct SloPolicy {
  double scale_lo = 0.5;
  double scale_hi = 2.5;
  Duration baseline_ttft{0};
  Duration baseline_tbt{0};
  Tokens chunk_token_budget = 2048;

  void validate() const;
};

// slo_ttft = baseline_ttft * u * ceil(prompt / chunk), slo_tbt =
// baseline_tbt * u' with u, u' independent uniform draws from the range.
void assign_slos(std::vector<Request>& trace, const SloPolicy& policy, Rng& rng);

}  // namespace kvsched
