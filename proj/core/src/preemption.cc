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

#include "kvsched/preemption.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace kvsched {

void VictimBuckets::validate() const {
  for (std::size_t i = 1; i < slo_edges.size(); ++i) {
    if (!(slo_edges[i - 1] < slo_edges[i])) {
      throw InputError("preemption.slo_edges must be strictly increasing");
    }
  }
  if (token_bucket < 1) throw InputError("preemption.token_bucket must be >= 1");
}

int slo_bucket(const VictimBuckets& buckets, Duration slo_tbt) {
  const auto it = std::upper_bound(buckets.slo_edges.begin(),
                                   buckets.slo_edges.end(), slo_tbt);
  return static_cast<int>(it - buckets.slo_edges.begin());
}

VictimKey victim_key(const VictimBuckets& buckets, const VictimCandidate& c) {
  VictimKey k;
  k.slo_bucket = slo_bucket(buckets, c.slo_tbt);
  k.remaining_bucket = std::max<Tokens>(0, c.remaining) / buckets.token_bucket;
  k.occupancy = c.occupancy;
  k.id = c.id;
  return k;
}

bool victim_before(const VictimKey& a, const VictimKey& b) {
  if (a.slo_bucket != b.slo_bucket) return a.slo_bucket > b.slo_bucket;
  if (a.remaining_bucket != b.remaining_bucket) {
    return a.remaining_bucket > b.remaining_bucket;
  }
  if (a.occupancy != b.occupancy) return a.occupancy < b.occupancy;
  return a.id < b.id;
}

std::vector<RequestId> order_victims(std::span<const VictimCandidate> running,
                                     const VictimBuckets& buckets) {
  std::vector<VictimKey> keys;
  keys.reserve(running.size());
  for (const auto& c : running) keys.push_back(victim_key(buckets, c));
  std::sort(keys.begin(), keys.end(), victim_before);
  std::vector<RequestId> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(k.id);
  return out;
}

std::vector<RequestId> order_victims_last_arrived(
    std::span<const VictimCandidate> running) {
  std::vector<VictimCandidate> v(running.begin(), running.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (a.arrival != b.arrival) return a.arrival > b.arrival;
    return a.id > b.id;
  });
  std::vector<RequestId> out;
  out.reserve(v.size());
  for (const auto& c : v) out.push_back(c.id);
  return out;
}

namespace {

bool has_spread(std::span<const ProfileSample> samples) {
  return std::any_of(samples.begin(), samples.end(), [&](const auto& s) {
    return s.seq_len != samples.front().seq_len;
  });
}

struct Candidate {
  double residual = std::numeric_limits<double>::infinity();
  RecomputeModel model;
};

}  // namespace

RecomputeModel fit_recompute(std::span<const ProfileSample> samples) {
  if (samples.size() < 8) {
    std::ostringstream os;
    os << "fit_recompute: need at least 8 samples, got " << samples.size();
    throw InputError(os.str());
  }
  if (!has_spread(samples)) {
    throw InputError("fit_recompute: all samples share one seq_len");
  }
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::VectorXd s(n), w(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = samples[static_cast<std::size_t>(i)];
    if (p.seq_len < 1 || !(p.latency_ms > 0.0)) {
      throw InputError("fit_recompute: samples need seq_len >= 1 and latency > 0");
    }
    s(i) = static_cast<double>(p.seq_len);
    w(i) = 1.0 / p.latency_ms;
    y(i) = 1.0;  // latency * weight
  }

  Candidate best;
  Eigen::MatrixXd cols(n, 3);
  for (int step = 0; step <= 180; ++step) {
    const double beta = 1.2 + 0.01 * step;
    for (Eigen::Index i = 0; i < n; ++i) {
      cols(i, 0) = std::pow(s(i), beta) * w(i);
      cols(i, 1) = s(i) * w(i);
      cols(i, 2) = w(i);
    }
    // Non-negative least squares over three columns by enumerating supports.
    for (int mask = 1; mask < 8; ++mask) {
      std::vector<Eigen::Index> idx;
      for (int c = 0; c < 3; ++c) {
        if (mask & (1 << c)) idx.push_back(c);
      }
      Eigen::MatrixXd x(n, static_cast<Eigen::Index>(idx.size()));
      for (std::size_t c = 0; c < idx.size(); ++c) {
        x.col(static_cast<Eigen::Index>(c)) = cols.col(idx[c]);
      }
      const Eigen::VectorXd coef = x.colPivHouseholderQr().solve(y);
      if ((coef.array() < 0.0).any() || !coef.allFinite()) continue;
      const double residual = (x * coef - y).squaredNorm();
      if (residual < best.residual) {
        double full[3] = {0.0, 0.0, 0.0};
        for (std::size_t c = 0; c < idx.size(); ++c) {
          full[idx[c]] = coef(static_cast<Eigen::Index>(c));
        }
        best.residual = residual;
        best.model = RecomputeModel{full[0], beta, full[1], full[2]};
      }
    }
  }
  if (!std::isfinite(best.residual)) {
    throw InputError("fit_recompute: no non-negative fit found");
  }
  return best.model;
}

SwapModel fit_swap(std::span<const ProfileSample> samples) {
  if (samples.size() < 2 || !has_spread(samples)) {
    throw InputError("fit_swap: need at least two distinct seq_len values");
  }
  double mean_s = 0.0;
  double mean_y = 0.0;
  for (const auto& p : samples) {
    mean_s += static_cast<double>(p.seq_len);
    mean_y += p.latency_ms;
  }
  const auto n = static_cast<double>(samples.size());
  mean_s /= n;
  mean_y /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& p : samples) {
    const double dx = static_cast<double>(p.seq_len) - mean_s;
    sxy += dx * (p.latency_ms - mean_y);
    sxx += dx * dx;
  }
  SwapModel m;
  m.gamma_s = sxy / sxx;
  m.delta_s = mean_y - m.gamma_s * mean_s;
  if (!(m.gamma_s > 0.0)) {
    std::ostringstream os;
    os << "fit_swap: fitted slope " << m.gamma_s
       << " is not positive; swap latency must grow with seq_len";
    throw InputError(os.str());
  }
  if (m.delta_s < 0.0) {
    std::ostringstream os;
    os << "fit_swap: fitted intercept " << m.delta_s << " is negative";
    throw InputError(os.str());
  }
  return m;
}

SweetSpot sweet_spot(const RecomputeModel& r, const SwapModel& s,
                     double s_max) {
  auto f = [&](double x) { return r.eval(x) - s.eval(x); };
  double lo = 1.0;
  double hi = s_max;
  const double f_lo = f(lo);
  const double f_hi = f(hi);
  if (f_lo >= 0.0 && f_hi >= 0.0) {
    throw InputError(
        "sweet_spot: no crossover, swapping is never slower (swap dominates)");
  }
  if (f_lo < 0.0 && f_hi < 0.0) {
    throw InputError(
        "sweet_spot: no crossover, recomputation is always faster "
        "(recompute dominates)");
  }
  if (f_lo > 0.0) {
    throw InputError(
        "sweet_spot: recomputation is slower for short sequences; models are "
        "inverted");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-9 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  SweetSpot spot;
  spot.root = 0.5 * (lo + hi);
  spot.s_star = static_cast<Tokens>(std::llround(spot.root));
  return spot;
}

}  // namespace kvsched
