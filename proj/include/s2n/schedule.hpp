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

// Closed-form noise schedules z_t = alpha(t) x + sigma(t) eps on t in [0, 1].
//
// Every family provides alpha, sigma, lambda = log(alpha^2 / sigma^2) and the
// analytic time derivatives of all three. Nothing here differentiates
// numerically.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "s2n/error.hpp"

namespace s2n {

enum class ScheduleFamily { vp, ve, iddpm, fm_ot, warped, custom };

using ParamMap = std::map<std::string, double>;

struct SchedulePoint {
  double t = 0.0;
  double alpha = 0.0;
  double sigma = 0.0;
  double lambda = 0.0;
  double dalpha_dt = 0.0;
  double dsigma_dt = 0.0;
  double dlambda_dt = 0.0;
};

/// User-supplied closed forms: returns {alpha, dalpha_dt, sigma, dsigma_dt}.
using CustomCurves = std::function<std::array<double, 4>(double)>;

/// Monotone reparameterization of time. `map` must be strictly increasing and
/// fix the window endpoints; `derivative` is its analytic derivative.
/// `bend` is set for the serializable family u -> u + bend u (1 - u) on the
/// normalized window.
struct Warp {
  std::function<double(double)> map;
  std::function<double(double)> derivative;
  std::optional<double> bend;
};

inline std::string to_string(ScheduleFamily f) {
  switch (f) {
    case ScheduleFamily::vp: return "VP";
    case ScheduleFamily::ve: return "VE";
    case ScheduleFamily::iddpm: return "iDDPM";
    case ScheduleFamily::fm_ot: return "FM_OT";
    case ScheduleFamily::warped: return "Warped";
    case ScheduleFamily::custom: return "Custom";
  }
  return "?";
}

inline ScheduleFamily parse_family(const std::string& name) {
  std::string key;
  for (char c : name) {
    if (c == '-' || c == '_') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "vp") return ScheduleFamily::vp;
  if (key == "ve") return ScheduleFamily::ve;
  if (key == "iddpm") return ScheduleFamily::iddpm;
  if (key == "fmot") return ScheduleFamily::fm_ot;
  if (key == "warped") return ScheduleFamily::warped;
  if (key == "custom") return ScheduleFamily::custom;
  throw ConfigError("unknown schedule family '" + name + "'");
}

/// Parameter defaults of the built-in families.
inline ParamMap default_params(ScheduleFamily f) {
  switch (f) {
    case ScheduleFamily::vp: return {{"beta_min", 0.1}, {"beta_d", 19.9}};
    case ScheduleFamily::ve: return {{"sigma_min", 0.01}, {"sigma_max", 50.0}};
    case ScheduleFamily::iddpm: return {{"s", 0.008}};
    default: return {};
  }
}

/// Default valid window {t_min, t_max}. lambda diverges at the clipped ends.
inline std::pair<double, double> default_window(ScheduleFamily f) {
  switch (f) {
    case ScheduleFamily::vp: return {1e-3, 1.0};
    case ScheduleFamily::ve: return {0.0, 1.0};
    case ScheduleFamily::iddpm: return {1e-3, 1.0 - 1e-3};
    case ScheduleFamily::fm_ot: return {1e-3, 1.0 - 1e-3};
    default: return {1e-3, 1.0};
  }
}

class Schedule;
inline Schedule make_schedule(ScheduleFamily family, const ParamMap& params, double t_min, double t_max);
inline Schedule make_custom_schedule(std::string label, CustomCurves curves, double t_min, double t_max);
inline Schedule make_warped_schedule(const Schedule& inner, Warp warp);
inline void validate_schedule(const Schedule& schedule);

/// An immutable, cheaply copyable schedule. Construct through make_schedule,
/// make_custom_schedule or time_warp (snr_space.hpp).
class Schedule {
 public:
  ScheduleFamily family() const { return impl_->family; }
  std::string name() const {
    return impl_->family == ScheduleFamily::custom ? impl_->label : to_string(impl_->family);
  }
  const ParamMap& params() const { return impl_->params; }
  double t_min() const { return impl_->t_min; }
  double t_max() const { return impl_->t_max; }
  bool contains(double t) const { return t >= impl_->t_min && t <= impl_->t_max; }

  /// Inner schedule and warp for Warped schedules, nullptr otherwise.
  const Schedule* inner() const { return impl_->inner.get(); }
  const Warp* warp() const { return impl_->family == ScheduleFamily::warped ? &impl_->warp : nullptr; }

  SchedulePoint eval(double t) const {
    if (!contains(t)) {
      std::ostringstream os;
      os.precision(17);
      os << "t=" << t << " outside schedule window [" << t_min() << ", " << t_max() << "] of " << name();
      throw DomainError(os.str());
    }
    return eval_unchecked(t);
  }

  /// exp(lambda(t)) = alpha^2 / sigma^2.
  double snr(double t) const { return std::exp(eval(t).lambda); }

 private:
  struct Impl {
    ScheduleFamily family = ScheduleFamily::vp;
    ParamMap params;
    double t_min = 0.0;
    double t_max = 1.0;
    std::string label;
    CustomCurves custom;
    std::shared_ptr<const Schedule> inner;
    Warp warp;
  };

  explicit Schedule(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  SchedulePoint eval_unchecked(double t) const;

  std::shared_ptr<const Impl> impl_;

  friend Schedule make_schedule(ScheduleFamily, const ParamMap&, double, double);
  friend Schedule make_custom_schedule(std::string, CustomCurves, double, double);
  friend Schedule make_warped_schedule(const Schedule&, Warp);
  friend void validate_schedule(const Schedule&);
};

namespace detail {

inline double require_param(const ParamMap& p, const std::string& key, ScheduleFamily f) {
  auto it = p.find(key);
  if (it == p.end()) throw ConfigError("missing parameter '" + key + "' for " + to_string(f) + " schedule");
  if (!std::isfinite(it->second)) throw ConfigError("parameter '" + key + "' is not finite");
  return it->second;
}

inline SchedulePoint vp_point(double t, double beta_min, double beta_d) {
  // B(t) = beta_d t^2 / 2 + beta_min t; alpha = exp(-B/2); sigma^2 = 1 - exp(-B).
  const double b = 0.5 * beta_d * t * t + beta_min * t;
  const double db = beta_d * t + beta_min;
  const double one_minus_eb = -std::expm1(-b);  // 1 - e^{-B}
  SchedulePoint p;
  p.t = t;
  p.alpha = std::exp(-0.5 * b);
  p.sigma = std::sqrt(one_minus_eb);
  p.lambda = -std::log(std::expm1(b));
  p.dalpha_dt = -0.5 * db * p.alpha;
  p.dsigma_dt = 0.5 * db * std::exp(-b) / p.sigma;
  p.dlambda_dt = -db / one_minus_eb;
  return p;
}

inline SchedulePoint ve_point(double t, double sigma_min, double sigma_max) {
  const double log_ratio = std::log(sigma_max / sigma_min);
  SchedulePoint p;
  p.t = t;
  p.alpha = 1.0;
  p.dalpha_dt = 0.0;
  p.sigma = sigma_min * std::exp(t * log_ratio);
  p.dsigma_dt = p.sigma * log_ratio;
  p.lambda = (2.0 * t - 2.0) * std::log(sigma_min) - 2.0 * t * std::log(sigma_max);
  p.dlambda_dt = -2.0 * log_ratio;
  return p;
}

inline SchedulePoint iddpm_point(double t, double s) {
  const double scale = 0.5 * std::numbers::pi / (1.0 + s);
  const double c0 = std::cos(s * scale);
  const double phi = (t + s) * scale;
  SchedulePoint p;
  p.t = t;
  p.alpha = std::cos(phi) / c0;
  p.dalpha_dt = -std::sin(phi) * scale / c0;
  const double sigma2 = (1.0 - p.alpha) * (1.0 + p.alpha);
  p.sigma = std::sqrt(sigma2);
  p.dsigma_dt = -p.alpha * p.dalpha_dt / p.sigma;
  p.lambda = std::log(p.alpha * p.alpha / sigma2);
  p.dlambda_dt = 2.0 * p.dalpha_dt / (p.alpha * sigma2);
  return p;
}

inline SchedulePoint fm_ot_point(double t) {
  SchedulePoint p;
  p.t = t;
  p.alpha = 1.0 - t;
  p.sigma = t;
  p.dalpha_dt = -1.0;
  p.dsigma_dt = 1.0;
  p.lambda = 2.0 * std::log((1.0 - t) / t);
  p.dlambda_dt = -2.0 / (t * (1.0 - t));
  return p;
}

}  // namespace detail

inline SchedulePoint Schedule::eval_unchecked(double t) const {
  const Impl& s = *impl_;
  switch (s.family) {
    case ScheduleFamily::vp:
      return detail::vp_point(t, s.params.at("beta_min"), s.params.at("beta_d"));
    case ScheduleFamily::ve:
      return detail::ve_point(t, s.params.at("sigma_min"), s.params.at("sigma_max"));
    case ScheduleFamily::iddpm:
      return detail::iddpm_point(t, s.params.at("s"));
    case ScheduleFamily::fm_ot:
      return detail::fm_ot_point(t);
    case ScheduleFamily::custom: {
      const auto [a, da, sg, dsg] = s.custom(t);
      SchedulePoint p;
      p.t = t;
      p.alpha = a;
      p.dalpha_dt = da;
      p.sigma = sg;
      p.dsigma_dt = dsg;
      p.lambda = 2.0 * std::log(a / sg);
      p.dlambda_dt = 2.0 * (da / a - dsg / sg);
      return p;
    }
    case ScheduleFamily::warped: {
      const double tw = std::clamp(s.warp.map(t), s.inner->t_min(), s.inner->t_max());
      const double dw = s.warp.derivative(t);
      SchedulePoint p = s.inner->eval_unchecked(tw);
      p.t = t;
      p.dalpha_dt *= dw;
      p.dsigma_dt *= dw;
      p.dlambda_dt *= dw;
      return p;
    }
  }
  throw ConfigError("corrupt schedule family");
}

/// Dense-grid check of the schedule invariants on its window: alpha, sigma
/// positive and finite, lambda finite and strictly decreasing, lambda' < 0.
inline void validate_schedule(const Schedule& schedule) {
  constexpr int kGrid = 1000;
  const double lo = schedule.t_min();
  const double hi = schedule.t_max();
  if (!(lo >= 0.0) || !(hi <= 1.0) || !(lo < hi)) {
    std::ostringstream os;
    os << "invalid window [" << lo << ", " << hi << "]: need 0 <= t_min < t_max <= 1";
    throw ConfigError(os.str());
  }
  double prev_lambda = 0.0;
  for (int i = 0; i <= kGrid; ++i) {
    const double t = (i == kGrid) ? hi : lo + (hi - lo) * i / kGrid;
    const SchedulePoint p = schedule.eval_unchecked(t);
    std::ostringstream where;
    where.precision(17);
    where << schedule.name() << " at t=" << t;
    if (!(p.alpha > 0.0) || !std::isfinite(p.alpha)) throw ConfigError("alpha not positive/finite for " + where.str());
    if (!(p.sigma > 0.0) || !std::isfinite(p.sigma)) throw ConfigError("sigma not positive/finite for " + where.str() + " (lambda singular)");
    if (!std::isfinite(p.lambda)) throw ConfigError("lambda singular for " + where.str());
    if (!(p.dlambda_dt < 0.0)) throw ConfigError("lambda not decreasing for " + where.str());
    if (i > 0 && !(p.lambda < prev_lambda)) throw ConfigError("lambda not strictly decreasing for " + where.str());
    prev_lambda = p.lambda;
  }
}

/// Builds a built-in schedule (VP, VE, iDDPM, FM_OT). `params` must be
/// complete for the family; see default_params().
inline Schedule make_schedule(ScheduleFamily family, const ParamMap& params, double t_min, double t_max) {
  if (family == ScheduleFamily::warped || family == ScheduleFamily::custom) {
    throw ConfigError(to_string(family) + " schedules are built with time_warp / make_custom_schedule");
  }
  auto impl = std::make_shared<Schedule::Impl>();
  impl->family = family;
  impl->t_min = t_min;
  impl->t_max = t_max;
  const ParamMap defaults = default_params(family);
  for (const auto& [key, value] : params) {
    if (!defaults.contains(key)) throw ConfigError("unknown parameter '" + key + "' for " + to_string(family) + " schedule");
  }
  for (const auto& entry : defaults) {
    impl->params[entry.first] = detail::require_param(params, entry.first, family);
  }
  switch (family) {
    case ScheduleFamily::vp:
      if (impl->params["beta_min"] < 0.0 || impl->params["beta_d"] < 0.0 ||
          impl->params["beta_min"] + impl->params["beta_d"] <= 0.0) {
        throw ConfigError("VP schedule needs beta_min >= 0, beta_d >= 0, not both zero");
      }
      break;
    case ScheduleFamily::ve:
      if (!(impl->params["sigma_min"] > 0.0 && impl->params["sigma_max"] > impl->params["sigma_min"])) {
        throw ConfigError("VE schedule needs 0 < sigma_min < sigma_max");
      }
      break;
    case ScheduleFamily::iddpm:
      if (!(impl->params["s"] >= 0.0)) throw ConfigError("iDDPM schedule needs s >= 0");
      break;
    default:
      break;
  }
  Schedule schedule(std::move(impl));
  validate_schedule(schedule);
  return schedule;
}

/// Built-in family with default parameters and default window.
inline Schedule make_schedule(ScheduleFamily family) {
  const auto [lo, hi] = default_window(family);
  return make_schedule(family, default_params(family), lo, hi);
}

inline Schedule make_custom_schedule(std::string label, CustomCurves curves, double t_min, double t_max) {
  if (!curves) throw ConfigError("custom schedule without curves");
  auto impl = std::make_shared<Schedule::Impl>();
  impl->family = ScheduleFamily::custom;
  impl->label = label.empty() ? "Custom" : std::move(label);
  impl->custom = std::move(curves);
  impl->t_min = t_min;
  impl->t_max = t_max;
  Schedule schedule(std::move(impl));
  validate_schedule(schedule);
  return schedule;
}

/// Composes `inner` with a monotone warp: alpha_2 = alpha_1 o w. The warp is
/// checked for endpoint preservation and strict monotonicity on a grid.
inline Schedule make_warped_schedule(const Schedule& inner, Warp warp) {
  if (!warp.map || !warp.derivative) throw ConfigError("warp needs map and derivative");
  const double lo = inner.t_min();
  const double hi = inner.t_max();
  const double tol = 1e-12 * std::max(1.0, hi);
  if (std::abs(warp.map(lo) - lo) > tol || std::abs(warp.map(hi) - hi) > tol) {
    throw ConfigError("warp must fix the window endpoints");
  }
  constexpr int kGrid = 1000;
  double prev = warp.map(lo);
  for (int i = 1; i <= kGrid; ++i) {
    const double t = (i == kGrid) ? hi : lo + (hi - lo) * i / kGrid;
    const double w = warp.map(t);
    if (!(w > prev) || !(warp.derivative(t) >= 0.0)) throw ConfigError("warp is not strictly increasing");
    prev = w;
  }
  auto impl = std::make_shared<Schedule::Impl>();
  impl->family = ScheduleFamily::warped;
  impl->t_min = lo;
  impl->t_max = hi;
  impl->inner = std::make_shared<const Schedule>(inner);
  if (warp.bend) impl->params["bend"] = *warp.bend;
  impl->warp = std::move(warp);
  Schedule schedule(std::move(impl));
  validate_schedule(schedule);
  return schedule;
}

/// Quadratic warp on the normalized window u = (t - lo) / (hi - lo):
/// w = lo + (hi - lo) (u + bend u (1 - u)). Strictly increasing with
/// w' in [1 - |bend|, 1 + |bend|] for |bend| < 1, so lambda' stays negative.
inline Warp bend_warp(double lo, double hi, double bend) {
  if (!(std::abs(bend) < 1.0)) throw ConfigError("bend warp needs |bend| < 1");
  const double width = hi - lo;
  Warp w;
  w.map = [=](double t) {
    if (t <= lo) return lo;
    if (t >= hi) return hi;
    const double u = (t - lo) / width;
    return lo + width * (u + bend * u * (1.0 - u));
  };
  w.derivative = [=](double t) {
    const double u = (t - lo) / width;
    return 1.0 + bend * (1.0 - 2.0 * u);
  };
  w.bend = bend;
  return w;
}

}  // namespace s2n
