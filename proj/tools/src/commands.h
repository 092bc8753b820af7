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

#include <iosfwd>
#include <string>
#include <vector>

#include "config_io.h"

namespace kvsched::cli {

inline constexpr std::string_view kSweepAxes[] = {
    "fixed_padding", "arrival_rate", "confidence", "block_size", "reserved_blocks", "m"};

// Returns a copy of base with the sweep axis set to value.
SimConfig apply_axis(const SimConfig& base, std::string_view axis, double value);

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  std::string policy;
  MetricsReport metrics;
};

// One isolated run per (value, seed) pair, spread over threads. Rows come
// back ordered by value then seed whatever the thread count.
std::vector<SweepRow> run_sweep(const SimConfig& base, std::string_view axis,
                                const std::vector<double>& values,
                                const std::vector<std::uint64_t>& seeds, unsigned threads);

std::string sweep_csv_header();
std::string sweep_csv_row(std::string_view axis, const SweepRow& row);

// Parses argv and dispatches; never throws. Returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace kvsched::cli
