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

#include "kvsched/types.h"

namespace kvsched {

// Which way the predictor believes it missed: Under means the true length is
// expected to be at or above the prediction, so padding is added.
enum class Direction { kUnder, kOver };

struct LengthEstimate {
  Tokens predicted_len = 1;
  Tokens range_lo = 1;
  Tokens range_hi = 1;
  Direction direction = Direction::kUnder;
  double confidence = 0.5;
  Tokens padding = 0;
  Tokens estimated_len = 1;
};

}  // namespace kvsched
