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

#include "kvsched/costmodel.h"

#include <cmath>

namespace kvsched {

void IterationCost::validate() const {
  if (!(base_ms >= 0.0)) throw InputError("cost.iteration.base_ms must be >= 0");
  if (!(per_token_ms > 0.0)) {
    throw InputError("cost.iteration.per_token_ms must be > 0");
  }
  if (!(prefill_multiplier > 0.0)) {
    throw InputError("cost.iteration.prefill_multiplier must be > 0");
  }
}

Duration iteration_latency(const IterationCost& model, Tokens batch_tokens) {
  if (batch_tokens < 0) {
    throw ContractViolation("iteration_latency: batch_tokens must be >= 0");
  }
  return from_ms(model.base_ms +
                 model.per_token_ms * static_cast<double>(batch_tokens));
}

Duration iteration_latency(const IterationCost& model, Tokens prefill_tokens,
                           Tokens decode_tokens) {
  if (prefill_tokens < 0 || decode_tokens < 0) {
    throw ContractViolation("iteration_latency: token counts must be >= 0");
  }
  const double weighted =
      model.prefill_multiplier * static_cast<double>(prefill_tokens) +
      static_cast<double>(decode_tokens);
  return from_ms(model.base_ms + model.per_token_ms * weighted);
}

void SwapModel::validate() const {
  if (!(gamma_s > 0.0)) throw InputError("swap model: gamma_s must be > 0");
  if (!(delta_s >= 0.0)) throw InputError("swap model: delta_s must be >= 0");
}

double RecomputeModel::eval(double seq_len) const {
  return alpha_r * std::pow(seq_len, beta_r) + kappa_r * seq_len + eps_r;
}

void RecomputeModel::validate() const {
  if (!(alpha_r >= 0.0)) throw InputError("recompute model: alpha_r must be >= 0");
  if (!(beta_r > 1.0)) throw InputError("recompute model: beta_r must be > 1");
  if (!(eval(1.0) > 0.0)) {
    throw InputError("recompute model: latency must be positive at S = 1");
  }
}

void TruthCosts::validate() const {
  swap.validate();
  recompute.validate();
  if (!(swap_out_share >= 0.0 && swap_out_share <= 1.0)) {
    throw InputError("cost.swap_out_share must be in [0, 1]");
  }
}

namespace {

void require_positive_len(Tokens seq_len) {
  if (seq_len < 1) throw ContractViolation("latency: seq_len must be >= 1");
}

}  // namespace

Duration swap_latency(const TruthCosts& truth, Tokens seq_len) {
  require_positive_len(seq_len);
  return from_ms(truth.swap.eval(static_cast<double>(seq_len)));
}

Duration swap_out_latency(const TruthCosts& truth, Tokens seq_len) {
  require_positive_len(seq_len);
  return from_ms(truth.swap_out_share *
                 truth.swap.eval(static_cast<double>(seq_len)));
}

Duration swap_in_latency(const TruthCosts& truth, Tokens seq_len) {
  // Computed as the difference so out + in equals the round trip exactly.
  return swap_latency(truth, seq_len) - swap_out_latency(truth, seq_len);
}

Duration recompute_latency(const TruthCosts& truth, Tokens seq_len) {
  require_positive_len(seq_len);
  return from_ms(truth.recompute.eval(static_cast<double>(seq_len)));
}

Profile sample_profile(const TruthCosts& truth, std::span<const Tokens> s_values,
                       double noise_sigma_rel, Rng& rng) {
  if (s_values.empty()) throw ContractViolation("sample_profile: no seq lengths");
  if (noise_sigma_rel < 0.0) {
    throw ContractViolation("sample_profile: noise sigma must be >= 0");
  }
  Profile p;
  p.swap.reserve(s_values.size());
  p.recompute.reserve(s_values.size());
  for (Tokens s : s_values) {
    require_positive_len(s);
    const double x = static_cast<double>(s);
    // Draw both noise terms even at sigma 0 so streams line up across sigmas.
    const double zs = rng.normal();
    const double zr = rng.normal();
    p.swap.push_back({s, truth.swap.eval(x) * (1.0 + noise_sigma_rel * zs)});
    p.recompute.push_back(
        {s, truth.recompute.eval(x) * (1.0 + noise_sigma_rel * zr)});
  }
  return p;
}

}  // namespace kvsched
