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

#include <gtest/gtest.h>

#include "kvsched/costmodel.h"

namespace kvsched {
namespace {

using std::chrono::microseconds;
using std::chrono::milliseconds;

TEST(IterationLatency, LinearInTokens) {
  const IterationCost c{5.0, 0.01, 1.0};
  EXPECT_EQ(iteration_latency(c, 1000), milliseconds(15));
  EXPECT_EQ(iteration_latency(c, 0), milliseconds(5));
  EXPECT_EQ(iteration_latency(c, 1000) - iteration_latency(c, 500), microseconds(5000));
  EXPECT_THROW(iteration_latency(c, -1), ContractViolation);
}

TEST(IterationLatency, PrefillWeighting) {
  const IterationCost c{5.0, 0.01, 2.0};
  EXPECT_EQ(iteration_latency(c, 100, 50), microseconds(5000 + 2500));
  const IterationCost flat{5.0, 0.01, 1.0};
  EXPECT_EQ(iteration_latency(flat, 100, 50), iteration_latency(flat, 150));
}

TEST(IterationCost, ValidateRejectsBadCoefficients) {
  EXPECT_NO_THROW(IterationCost{}.validate());
  EXPECT_THROW((IterationCost{-1.0, 0.01, 1.0}.validate()), InputError);
  EXPECT_THROW((IterationCost{1.0, 0.0, 1.0}.validate()), InputError);
}

TEST(StrategyLatency, DefaultsCrossAt4000) {
  const TruthCosts t;
  EXPECT_EQ(swap_latency(t, 4000), milliseconds(16));
  EXPECT_EQ(recompute_latency(t, 4000), milliseconds(16));
  EXPECT_EQ(recompute_latency(t, 100), microseconds(10));
  EXPECT_EQ(swap_latency(t, 100), microseconds(8200));
  EXPECT_EQ(swap_latency(t, 100000), milliseconds(208));
  EXPECT_EQ(recompute_latency(t, 100000), milliseconds(10000));
}

TEST(StrategyLatency, SwapRoundTripSplitsExactly) {
  TruthCosts t;
  t.swap_out_share = 0.3;
  for (Tokens s : {1, 17, 999, 4000, 123457}) {
    EXPECT_EQ(swap_out_latency(t, s) + swap_in_latency(t, s), swap_latency(t, s));
  }
  EXPECT_THROW(swap_latency(t, 0), ContractViolation);
}

TEST(TruthCosts, ValidateRejectsBadModels) {
  TruthCosts t;
  EXPECT_NO_THROW(t.validate());
  t.swap_out_share = 1.5;
  EXPECT_THROW(t.validate(), InputError);
  t = {};
  t.recompute.beta_r = 1.0;
  EXPECT_THROW(t.validate(), InputError);
  t = {};
  t.swap.gamma_s = 0.0;
  EXPECT_THROW(t.validate(), InputError);
}

TEST(SampleProfile, ZeroNoiseIsExactTruth) {
  const TruthCosts t;
  const Tokens s[] = {256, 1024, 4000};
  Rng rng(1);
  const Profile p = sample_profile(t, s, 0.0, rng);
  ASSERT_EQ(p.swap.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(p.swap[i].latency_ms, t.swap.eval(static_cast<double>(s[i])));
    EXPECT_DOUBLE_EQ(p.recompute[i].latency_ms, t.recompute.eval(static_cast<double>(s[i])));
  }
}

TEST(SampleProfile, RejectsEmptyAndNegativeNoise) {
  Rng rng(1);
  EXPECT_THROW(sample_profile(TruthCosts{}, {}, 0.01, rng), ContractViolation);
  const Tokens s[] = {256};
  EXPECT_THROW(sample_profile(TruthCosts{}, s, -0.1, rng), ContractViolation);
}

TEST(SampleProfile, NoiseIsMultiplicative) {
  const TruthCosts t;
  std::vector<Tokens> s(2000, 2000);
  Rng rng(9);
  const Profile p = sample_profile(t, s, 0.01, rng);
  double sum = 0.0;
  double sq = 0.0;
  for (const auto& x : p.swap) {
    const double r = x.latency_ms / t.swap.eval(2000.0) - 1.0;
    sum += r;
    sq += r * r;
  }
  const double n = static_cast<double>(s.size());
  EXPECT_NEAR(sum / n, 0.0, 0.001);
  EXPECT_NEAR(std::sqrt(sq / n), 0.01, 0.001);
}

}  // namespace
}  // namespace kvsched
