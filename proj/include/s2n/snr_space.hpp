/*
   Copyright 2026 The s2ndiff Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

// Schedules re-indexed by log-SNR: alpha_tilde = alpha o lambda^{-1}.
// Two schedules with the same lambda range and the same alpha_tilde define
// the same forward process up to a time reparameterization.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <utility>

#include "s2n/error.hpp"
#include "s2n/schedule.hpp"

namespace s2n {

/// Forward-process coefficients at a given log-SNR. For points produced by
/// tilde_eval, tilde_sigma = tilde_alpha exp(-lambda / 2). Synthetic channel
/// points (see infotheory.hpp) need not satisfy that identity.
struct SnrPoint {
  double lambda = 0.0;
  double tilde_alpha = 1.0;
  double tilde_sigma = 1.0;
  double dtilde_alpha_dlambda = 0.0;
  double dtilde_sigma_dlambda = 0.0;
  double t = 0.0;  // preimage time, when known
};

/// [lambda(t_max), lambda(t_min)].
inline std::pair<double, double> lambda_range(const Schedule& schedule) {
  return {schedule.eval(schedule.t_max()).lambda, schedule.eval(schedule.t_min()).lambda};
}

inline double lambda_tolerance(double lambda) { return 1e-12 * std::max(1.0, std::abs(lambda)); }

/// Inverts the strictly decreasing lambda(t): bisection (at most 200 halvings)
/// followed by safeguarded Newton steps inside the final bracket.
inline double t_of_lambda(const Schedule& schedule, double lambda) {
  double lo = schedule.t_min();
  double hi = schedule.t_max();
  const double lam_lo = schedule.eval(lo).lambda;  // largest
  const double lam_hi = schedule.eval(hi).lambda;  // smallest
  const double tol = lambda_tolerance(lambda);
  if (!std::isfinite(lambda) || lambda > lam_lo + tol || lambda < lam_hi - tol) {
    std::ostringstream os;
    os.precision(17);
    os << "lambda=" << lambda << " outside attainable range [" << lam_hi << ", " << lam_lo << "] of "
       << schedule.name();
    throw DomainError(os.str());
  }
  if (std::abs(lambda - lam_lo) <= tol) return lo;
  if (std::abs(lambda - lam_hi) <= tol) return hi;

  // Invariant: lambda(lo) > target > lambda(hi).
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    t = 0.5 * (lo + hi);
    if (t <= lo || t >= hi) break;
    const double v = schedule.eval(t).lambda;
    if (std::abs(v - lambda) <= tol) break;
    if (v > lambda) {
      lo = t;
    } else {
      hi = t;
    }
    if (hi - lo <= 1e-9 * (schedule.t_max() - schedule.t_min())) break;
  }
  // Newton, falling back to bisection if a step leaves the bracket.
  for (int it = 0; it < 60; ++it) {
    const SchedulePoint p = schedule.eval(t);
    const double r = p.lambda - lambda;
    if (std::abs(r) <= 0.25 * tol) return t;
    if (r > 0.0) {
      lo = t;
    } else {
      hi = t;
    }
    double next = t - r / p.dlambda_dt;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == t) return t;
    t = next;
  }
  return t;
}

/// Coefficients at log-SNR `lambda`; derivatives by the chain rule
/// d/dlambda = (d/dt) / lambda'(t).
inline SnrPoint tilde_eval(const Schedule& schedule, double lambda) {
  const double t = t_of_lambda(schedule, lambda);
  const SchedulePoint p = schedule.eval(t);
  SnrPoint q;
  q.lambda = lambda;
  q.t = t;
  q.tilde_alpha = p.alpha;
  q.tilde_sigma = p.alpha * std::exp(-0.5 * lambda);
  q.dtilde_alpha_dlambda = p.dalpha_dt / p.dlambda_dt;
  q.dtilde_sigma_dlambda = p.dsigma_dt / p.dlambda_dt;
  return q;
}

/// A Warped schedule alpha_2 = alpha_1 o w. The warp must be strictly
/// increasing and fix the window endpoints.
inline Schedule time_warp(const Schedule& schedule, Warp warp) { return make_warped_schedule(schedule, std::move(warp)); }

struct EquivalenceReport {
  bool equivalent = false;
  bool endpoints_match = false;
  double max_deviation = 0.0;  // max |alpha_tilde_1 - alpha_tilde_2| on the grid
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;
};

/// Compares alpha_tilde of two schedules on `n_points` uniformly spaced
/// log-SNR values of the common range. Equivalent iff the endpoint log-SNRs
/// agree within `tol` and the maximum deviation is at most `tol`.
inline EquivalenceReport equivalence_check(const Schedule& s1, const Schedule& s2, std::size_t n_points, double tol) {
  if (n_points < 2) throw ConfigError("equivalence_check needs n_points >= 2");
  if (!(tol >= 0.0)) throw ConfigError("equivalence_check needs tol >= 0");
  const auto [lo1, hi1] = lambda_range(s1);
  const auto [lo2, hi2] = lambda_range(s2);
  EquivalenceReport r;
  r.lambda_lo = std::max(lo1, lo2);
  r.lambda_hi = std::min(hi1, hi2);
  if (!(r.lambda_lo < r.lambda_hi)) throw DomainError("schedules have disjoint log-SNR ranges");
  r.endpoints_match = std::abs(lo1 - lo2) <= tol * std::max(1.0, std::abs(lo1)) &&
                      std::abs(hi1 - hi2) <= tol * std::max(1.0, std::abs(hi1));
  for (std::size_t i = 0; i < n_points; ++i) {
    const double lam = (i + 1 == n_points)
                           ? r.lambda_hi
                           : r.lambda_lo + (r.lambda_hi - r.lambda_lo) * static_cast<double>(i) /
                                               static_cast<double>(n_points - 1);
    const double a1 = tilde_eval(s1, lam).tilde_alpha;
    const double a2 = tilde_eval(s2, lam).tilde_alpha;
    r.max_deviation = std::max(r.max_deviation, std::abs(a1 - a2));
  }
  r.equivalent = r.endpoints_match && r.max_deviation <= tol;
  return r;
}

}  // namespace s2n
