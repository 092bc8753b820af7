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

#include "kvsched/request.h"

namespace kvsched {
namespace {

using std::chrono::milliseconds;

SimTime at_ms(std::int64_t ms) { return at_us(ms * 1000); }

RequestInfo info(std::int64_t arrival_ms, std::int64_t ttft_ms, std::int64_t tbt_ms) {
  RequestInfo i;
  i.arrival = at_ms(arrival_ms);
  i.prompt_len = 10;
  i.slo_ttft = milliseconds(ttft_ms);
  i.slo_tbt = milliseconds(tbt_ms);
  return i;
}

TEST(RemainingTtft, SubtractsElapsedFromSlo) {
  RequestRuntime rt;
  EXPECT_EQ(remaining_ttft(info(0, 500, 50), rt, at_ms(100)), milliseconds(400));
  EXPECT_EQ(remaining_ttft(info(0, 500, 50), rt, at_ms(500)), milliseconds(0));
  EXPECT_EQ(remaining_ttft(info(200, 300, 50), rt, at_ms(600)), milliseconds(-100));
}

TEST(RemainingTbt, MeasuredFromLastToken) {
  RequestRuntime rt;
  rt.generated = 3;
  rt.first_token_at = at_ms(900);
  rt.last_token_at = at_ms(1000);
  EXPECT_EQ(remaining_tbt(info(0, 500, 200), rt, at_ms(1100)), milliseconds(100));
  EXPECT_EQ(remaining_tbt(info(0, 500, 200), rt, at_ms(1200)), milliseconds(0));
  rt.first_token_at = at_ms(0);
  rt.last_token_at = at_ms(0);
  EXPECT_EQ(remaining_tbt(info(0, 500, 50), rt, at_ms(80)), milliseconds(-30));
}

TEST(RemainingTime, UsesTtftBeforeFirstTokenAndTbtAfter) {
  RequestRuntime rt;
  const RequestInfo i = info(0, 500, 200);
  EXPECT_EQ(remaining_time(i, rt, at_ms(100)), milliseconds(400));
  rt.generated = 1;
  rt.first_token_at = at_ms(300);
  rt.last_token_at = at_ms(300);
  EXPECT_EQ(remaining_time(i, rt, at_ms(350)), milliseconds(150));
}

TEST(Transition, LegalMovesSucceed) {
  RequestRuntime rt;
  transition(rt, state::Running{}, at_ms(1));
  EXPECT_TRUE(rt.running());
  transition(rt, state::Preempted{PreemptStrategy::kSwap, milliseconds(5)}, at_ms(10));
  EXPECT_TRUE(rt.preempted());
  EXPECT_EQ(rt.preemption_count, 1);
  transition(rt, state::Running{}, at_ms(30));
  // Halted 20 ms plus the 5 ms resume charge.
  EXPECT_EQ(rt.preemption_time_total, milliseconds(25));
  transition(rt, state::Completed{}, at_ms(40));
  EXPECT_TRUE(rt.completed());
}

TEST(Transition, CompletedIsTerminal) {
  RequestRuntime rt;
  transition(rt, state::Running{}, at_ms(0));
  transition(rt, state::Completed{}, at_ms(1));
  EXPECT_THROW(transition(rt, state::Running{}, at_ms(2)), ContractViolation);
}

TEST(Transition, WaitingCannotCompleteOrBePreempted) {
  RequestRuntime rt;
  EXPECT_THROW(transition(rt, state::Completed{}, at_ms(0)), ContractViolation);
  EXPECT_THROW(transition(rt, state::Preempted{}, at_ms(0)), ContractViolation);
  EXPECT_TRUE(rt.waiting());
}

TEST(Validate, RejectsNonPositiveLengths) {
  Request r;
  r.info = info(0, 100, 10);
  EXPECT_NO_THROW(validate(r));
  r.true_output_len = 0;
  EXPECT_THROW(validate(r), InputError);
  r.true_output_len = 5;
  r.info.prompt_len = 0;
  EXPECT_THROW(validate(r), InputError);
}

TEST(ContextLen, PromptPlusGenerated) {
  RequestRuntime rt;
  rt.generated = 7;
  EXPECT_EQ(context_len(info(0, 1, 1), rt), 17);
}

}  // namespace
}  // namespace kvsched
