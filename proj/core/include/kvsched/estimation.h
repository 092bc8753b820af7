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

#include "kvsched/length_estimate.h"
#include "kvsched/request.h"
#include "kvsched/rng.h"

namespace kvsched {

// Distribution of (true - predicted) used to synthesize predictions.
struct ErrorModel {
  enum class Kind { kPoint, kUniform, kNormal };

  Kind kind = Kind::kPoint;
  double value = 0.0;  // point mass location
  double lo = 0.0;     // uniform support, or clip range for kNormal
  double hi = 0.0;
  double sigma = 0.0;  // kNormal standard deviation, mean zero
  // When set, samples are fractions of the true length rather than tokens.
  bool relative = false;

  // Rounded to whole tokens.
  Tokens sample(Rng& rng, Tokens true_len) const;
};

struct PredictorConfig {
  Tokens bin_width = 50;
  double direction_accuracy = 1.0;
  ErrorModel error_model;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Prediction {
  Tokens predicted_len = 1;
  Tokens range_lo = 1;
  Tokens range_hi = 1;
  Direction direction = Direction::kUnder;

  // Width of the enclosing bin; bins are ((k-1)w, kw] so this is w.
  Tokens range_width() const { return range_hi - range_lo + 1; }
};

// Bin k = ceil(predicted / w) reported as [(k-1)w + 1, kw].
Prediction bin_prediction(Tokens predicted_len, Tokens bin_width);

// predicted = max(1, true - error); direction = sign(true - predicted) with
// ties on Under, flipped with probability 1 - direction_accuracy.
Prediction predict(const Request& req, const PredictorConfig& cfg, Rng& rng);

// Owns its RNG so one simulation run draws one reproducible stream.
class Predictor {
 public:
  explicit Predictor(PredictorConfig cfg);

  Prediction predict(const Request& req) {
    return kvsched::predict(req, cfg_, rng_);
  }
  const PredictorConfig& config() const { return cfg_; }

 private:
  PredictorConfig cfg_;
  Rng rng_;
};

// c = clamp(alpha / (1 + beta * lambda), clamp_lo, clamp_hi).
struct ConfidencePolicy {
  double alpha = 0.9;
  double beta = 0.0;
  double clamp_lo = 0.5;
  double clamp_hi = 0.99;

  void validate() const;
};

double adaptive_confidence(const ConfidencePolicy& policy, double arrival_rate);

// One-sided Hoeffding padding for a single bounded deviation:
// min(width, round(width * sqrt(-ln(1 - c) / 2))). Padding never exceeds
// the range width because the deviation cannot.
Tokens hoeffding_padding(Tokens range_width, double confidence);

// Under adds the padding, Over subtracts it (floored at one token).
Tokens apply_padding(Tokens predicted_len, Direction direction, Tokens padding);

LengthEstimate make_estimate(const Prediction& p, double confidence);

}  // namespace kvsched
