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

#include <span>
#include <vector>

#include "kvsched/rng.h"
#include "kvsched/types.h"

namespace kvsched {

// Latency of one iteration: base + per_token * tokens, with prefill tokens
// optionally weighted differently from decode tokens.
struct IterationCost {
  double base_ms = 20.0;
  double per_token_ms = 0.02;
  double prefill_multiplier = 1.0;

  void validate() const;
};

Duration iteration_latency(const IterationCost& model, Tokens batch_tokens);
Duration iteration_latency(const IterationCost& model, Tokens prefill_tokens,
                           Tokens decode_tokens);

// L_s(S) = gamma * S + delta, milliseconds.
struct SwapModel {
  double gamma_s = 0.002;
  double delta_s = 8.0;

  double eval(double seq_len) const { return gamma_s * seq_len + delta_s; }
  void validate() const;
};

// L_r(S) = alpha * S^beta + kappa * S + eps, milliseconds.
struct RecomputeModel {
  double alpha_r = 1e-6;
  double beta_r = 2.0;
  double kappa_r = 0.0;
  double eps_r = 0.0;

  double eval(double seq_len) const;
  void validate() const;
};

// Ground truth the simulator charges. The swap cost is a round trip; the
// out-share is paid at preemption and the rest on resume.
struct TruthCosts {
  SwapModel swap;
  RecomputeModel recompute;
  double swap_out_share = 0.5;

  void validate() const;
};

Duration swap_latency(const TruthCosts& truth, Tokens seq_len);
Duration swap_out_latency(const TruthCosts& truth, Tokens seq_len);
Duration swap_in_latency(const TruthCosts& truth, Tokens seq_len);
Duration recompute_latency(const TruthCosts& truth, Tokens seq_len);

struct ProfileSample {
  Tokens seq_len = 0;
  double latency_ms = 0.0;
};

struct Profile {
  std::vector<ProfileSample> swap;
  std::vector<ProfileSample> recompute;
};

// Truth evaluations with multiplicative noise: latency * (1 + sigma * z).
Profile sample_profile(const TruthCosts& truth, std::span<const Tokens> s_values,
                       double noise_sigma_rel, Rng& rng);

}  // namespace kvsched
