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

#include "kvsched/estimation.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kvsched {

Tokens ErrorModel::sample(Rng& rng, Tokens true_len) const {
  double x = 0.0;
  switch (kind) {
    case Kind::kPoint:
      x = value;
      break;
    case Kind::kUniform:
      x = rng.uniform(lo, hi);
      break;
    case Kind::kNormal:
      x = rng.normal(0.0, sigma);
      if (hi > lo) x = std::clamp(x, lo, hi);
      break;
  }
  if (relative) x *= static_cast<double>(true_len);
  return static_cast<Tokens>(std::llround(x));
}

void PredictorConfig::validate() const {
  if (bin_width < 1) throw InputError("predictor.bin_width must be >= 1");
  if (!(direction_accuracy >= 0.0 && direction_accuracy <= 1.0)) {
    throw InputError("predictor.direction_accuracy must be in [0, 1]");
  }
  if (error_model.kind == ErrorModel::Kind::kUniform &&
      error_model.hi < error_model.lo) {
    throw InputError("predictor.error_model: uniform needs lo <= hi");
  }
  if (error_model.kind == ErrorModel::Kind::kNormal &&
      error_model.sigma < 0.0) {
    throw InputError("predictor.error_model: sigma must be >= 0");
  }
}

Prediction bin_prediction(Tokens predicted_len, Tokens bin_width) {
  Prediction p;
  p.predicted_len = predicted_len;
  const Tokens k = ceil_div(predicted_len, bin_width);
  p.range_lo = (k - 1) * bin_width + 1;
  p.range_hi = k * bin_width;
  return p;
}

Prediction predict(const Request& req, const PredictorConfig& cfg, Rng& rng) {
  if (req.info.prompt_len < 1) {
    throw ContractViolation("predict: prompt_len must be >= 1");
  }
  const Tokens err = cfg.error_model.sample(rng, req.true_output_len);
  const Tokens predicted = std::max<Tokens>(1, req.true_output_len - err);
  Prediction p = bin_prediction(predicted, cfg.bin_width);
  p.direction =
      req.true_output_len >= predicted ? Direction::kUnder : Direction::kOver;
  // Always consume the draw so the stream does not depend on accuracy.
  const bool flip = !rng.bernoulli(cfg.direction_accuracy);
  if (flip) {
    p.direction = p.direction == Direction::kUnder ? Direction::kOver
                                                   : Direction::kUnder;
  }
  return p;
}

Predictor::Predictor(PredictorConfig cfg)
    : cfg_(std::move(cfg)), rng_(Rng::stream(cfg_.seed, 0x9e3779b9)) {
  cfg_.validate();
}

void ConfidencePolicy::validate() const {
  if (!(alpha > 0.0)) throw InputError("confidence.alpha must be > 0");
  if (!(beta >= 0.0)) throw InputError("confidence.beta must be >= 0");
  if (!(clamp_lo > 0.0 && clamp_lo < clamp_hi && clamp_hi < 1.0)) {
    throw InputError("confidence clamps must satisfy 0 < lo < hi < 1");
  }
}

double adaptive_confidence(const ConfidencePolicy& policy,
                           double arrival_rate) {
  if (arrival_rate < 0.0) {
    throw ContractViolation("adaptive_confidence: arrival_rate must be >= 0");
  }
  const double raw = policy.alpha / (1.0 + policy.beta * arrival_rate);
  return std::clamp(raw, policy.clamp_lo, policy.clamp_hi);
}

Tokens hoeffding_padding(Tokens range_width, double confidence) {
  if (range_width < 0) {
    throw ContractViolation("hoeffding_padding: range_width must be >= 0");
  }
  if (!(confidence > 0.0 && confidence < 1.0)) {
    std::ostringstream err;
    err << "hoeffding_padding: confidence " << confidence
        << " outside (0, 1)";
    throw ContractViolation(err.str());
  }
  const double t = static_cast<double>(range_width) *
                   std::sqrt(-std::log(1.0 - confidence) / 2.0);
  // Round half up.
  const auto rounded = static_cast<Tokens>(std::floor(t + 0.5));
  return std::min(range_width, rounded);
}

Tokens apply_padding(Tokens predicted_len, Direction direction,
                     Tokens padding) {
  if (padding < 0) throw ContractViolation("apply_padding: padding < 0");
  if (direction == Direction::kUnder) return predicted_len + padding;
  return std::max<Tokens>(1, predicted_len - padding);
}

LengthEstimate make_estimate(const Prediction& p, double confidence) {
  LengthEstimate e;
  e.predicted_len = p.predicted_len;
  e.range_lo = p.range_lo;
  e.range_hi = p.range_hi;
  e.direction = p.direction;
  e.confidence = confidence;
  e.padding = hoeffding_padding(p.range_width(), confidence);
  e.estimated_len = apply_padding(p.predicted_len, p.direction, e.padding);
  return e;
}

}  // namespace kvsched
