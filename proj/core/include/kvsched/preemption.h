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

#include "kvsched/costmodel.h"
#include "kvsched/request.h"
#include "kvsched/types.h"

namespace kvsched {

struct VictimBuckets {
  // Lower edges of the TBT-SLO buckets. Anything below the first edge falls
  // in bucket 0 and anything at or past the last edge in the open top bucket.
  std::vector<Duration> slo_edges = {
      std::chrono::milliseconds(50), std::chrono::milliseconds(200),
      std::chrono::milliseconds(500), std::chrono::milliseconds(2000)};
  Tokens token_bucket = 128;

  void validate() const;
};

struct VictimCandidate {
  RequestId id;
  SimTime arrival;
  Duration slo_tbt{0};
  Tokens remaining = 0;  // estimated tokens still to generate
  Tokens occupancy = 0;  // KV tokens held
};

struct VictimKey {
  int slo_bucket = 0;
  Tokens remaining_bucket = 0;
  Tokens occupancy = 0;
  RequestId id;
};

int slo_bucket(const VictimBuckets& buckets, Duration slo_tbt);
VictimKey victim_key(const VictimBuckets& buckets, const VictimCandidate& c);

// True when a should be preempted before b: looser SLO bucket first, then
// more remaining work, then smaller occupancy, then lower id.
bool victim_before(const VictimKey& a, const VictimKey& b);

// First element is the first victim.
std::vector<RequestId> order_victims(std::span<const VictimCandidate> running,
                                     const VictimBuckets& buckets);

// Last arrived first, ties by higher id. This is the FCFS rule.
std::vector<RequestId> order_victims_last_arrived(
    std::span<const VictimCandidate> running);

// Least squares over a grid of exponents in [1.2, 3.0], step 0.01, with the
// linear coefficients constrained non-negative. Residuals are relative to
// the observed latency since profile noise is multiplicative.
RecomputeModel fit_recompute(std::span<const ProfileSample> samples);

// Ordinary least squares line. Rejects constant S and non-positive slopes.
SwapModel fit_swap(std::span<const ProfileSample> samples);

struct SweetSpot {
  Tokens s_star = 0;
  double root = 0.0;  // unrounded crossing point
};

// Bisection for L_r(S) = L_s(S) on [1, s_max]. Recomputation must be the
// cheaper strategy at S = 1 and the dearer one at s_max.
SweetSpot sweet_spot(const RecomputeModel& r, const SwapModel& s,
                     double s_max = 1e6);

inline PreemptStrategy choose_strategy(Tokens seq_len, const SweetSpot& spot) {
  return seq_len > spot.s_star ? PreemptStrategy::kSwap
                               : PreemptStrategy::kRecompute;
}

}  // namespace kvsched
