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

#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>

namespace kvsched {

// Token counts (prompt lengths, KVC grants, occupancies).
using Tokens = std::int64_t;

// Simulated time is integer microseconds so runs replay bit-exactly.
using Duration = std::chrono::duration<std::int64_t, std::micro>;

struct SimClock {
  using rep = std::int64_t;
  using period = std::micro;
  using duration = Duration;
  using time_point = std::chrono::time_point<SimClock, Duration>;
  static constexpr bool is_steady = true;
};

using SimTime = SimClock::time_point;

constexpr SimTime kSimEpoch{};

constexpr SimTime at_us(std::int64_t us) { return SimTime{Duration{us}}; }
constexpr std::int64_t to_us(SimTime t) { return t.time_since_epoch().count(); }

inline Duration from_ms(double ms) {
  return Duration{static_cast<std::int64_t>(std::llround(ms * 1000.0))};
}
inline Duration from_seconds(double s) {
  return Duration{static_cast<std::int64_t>(std::llround(s * 1e6))};
}
inline double to_ms(Duration d) { return static_cast<double>(d.count()) / 1000.0; }
inline double to_seconds(Duration d) { return static_cast<double>(d.count()) / 1e6; }

struct RequestId {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(RequestId, RequestId) = default;
  friend std::ostream& operator<<(std::ostream& os, RequestId id) {
    return os << id.value;
  }
};

// Raised when a caller breaks an operation's precondition, or when the
// simulator detects that one of its own invariants no longer holds.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised for bad user input: config files, traces, CSV samples.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Tokens ceil_div(Tokens a, Tokens b) { return (a + b - 1) / b; }
inline Tokens round_up(Tokens a, Tokens multiple) {
  return ceil_div(a, multiple) * multiple;
}

}  // namespace kvsched

template <>
struct std::hash<kvsched::RequestId> {
  std::size_t operator()(kvsched::RequestId id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
