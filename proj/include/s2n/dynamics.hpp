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

// Forward SDE dz = f(t) z dt + g(t) dw with f = alpha'/alpha and
// g^2 = -exp(-lambda) lambda' alpha^2, its Gaussian transition kernels, the
// reverse-time drift family indexed by rho, and the three interchangeable
// views of a denoiser (score, noise prediction, data prediction).

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2n/error.hpp"
#include "s2n/gmm.hpp"
#include "s2n/parallel.hpp"
#include "s2n/random.hpp"
#include "s2n/schedule.hpp"

namespace s2n {

struct DriftDiffusion {
  double f = 0.0;
  double g = 0.0;
};

/// q(z_t | z_s) = N(mean_coeff z_s, variance I).
struct TransitionKernel {
  double mean_coeff = 1.0;
  double variance = 0.0;
};

inline DriftDiffusion forward_coeffs(const Schedule& schedule, double t) {
  const SchedulePoint p = schedule.eval(t);
  // g^2 = -e^{-lambda} lambda' alpha^2 = -lambda' sigma^2
  const double g2 = -p.dlambda_dt * p.sigma * p.sigma;
  if (g2 < -1e-12) {
    throw NumericalError("negative diffusion radicand at t=" + std::to_string(t) + " (lambda increasing?)");
  }
  return {p.dalpha_dt / p.alpha, std::sqrt(std::max(0.0, g2))};
}

/// Kernel from s to t (s <= t). The variance alpha_t^2 (e^{-lambda_t} - e^{-lambda_s})
/// is evaluated as sigma_t^2 (1 - e^{lambda_t - lambda_s}) through expm1.
inline TransitionKernel transition(const Schedule& schedule, double s, double t) {
  if (s > t) throw DomainError("transition needs s <= t");
  const SchedulePoint ps = schedule.eval(s);
  const SchedulePoint pt = schedule.eval(t);
  TransitionKernel k;
  k.mean_coeff = pt.alpha / ps.alpha;
  k.variance = (s == t) ? 0.0 : pt.sigma * pt.sigma * -std::expm1(pt.lambda - ps.lambda);
  return k;
}

// ---------------------------------------------------------------------------
// Score models

enum class Prediction { score, noise, data };

inline std::string to_string(Prediction p) {
  switch (p) {
    case Prediction::score: return "score";
    case Prediction::noise: return "noise";
    case Prediction::data: return "data";
  }
  return "?";
}

/// A denoiser f(z, t) tagged with what it predicts. Must be callable from
/// several threads at once.
struct ScoreModel {
  Prediction tag = Prediction::score;
  std::function<Vec(const Vec&, double)> fn;

  Vec operator()(const Vec& z, double t) const { return fn(z, t); }
};

/// Converts a prediction `value` of kind `from` at (z, t) into kind `to`:
/// s = -eps / sigma, x_hat = (z + sigma^2 s) / alpha = (z - sigma eps) / alpha.
inline Vec convert_prediction(const Vec& value, Prediction from, Prediction to, const SchedulePoint& p, const Vec& z) {
  if (from == to) return value;
  switch (from) {
    case Prediction::score:
      if (to == Prediction::noise) return -p.sigma * value;
      return (z + p.sigma * p.sigma * value) / p.alpha;
    case Prediction::noise:
      if (to == Prediction::score) return -value / p.sigma;
      return (z - p.sigma * value) / p.alpha;
    case Prediction::data:
      if (to == Prediction::score) return (p.alpha * value - z) / (p.sigma * p.sigma);
      return (z - p.alpha * value) / p.sigma;
  }
  return value;
}

/// Evaluates `m` at (z, t) and returns the requested kind of prediction.
inline Vec predict(const ScoreModel& m, Prediction target, const Schedule& schedule, const Vec& z, double t) {
  const Vec raw = m(z, t);
  if (m.tag == target) return raw;
  return convert_prediction(raw, m.tag, target, schedule.eval(t), z);
}

inline ScoreModel convert_score_model(const ScoreModel& m, Prediction target, const Schedule& schedule) {
  if (m.tag == target) return m;
  ScoreModel out;
  out.tag = target;
  out.fn = [m, target, schedule](const Vec& z, double t) { return predict(m, target, schedule, z, t); };
  return out;
}

/// Exact oracle for Gaussian-mixture data: the true score / eps / E[x|z] of
/// the noisy marginal. Factorizations are cached per time value.
inline ScoreModel oracle_model(GmmSpec data, Schedule schedule, Prediction tag = Prediction::score) {
  validate(data);
  struct State {
    GmmSpec data;
    Schedule schedule;
    std::mutex mutex;
    std::map<double, std::shared_ptr<const NoisyMixture>> cache;
    State(GmmSpec d, Schedule s) : data(std::move(d)), schedule(std::move(s)) {}

    std::shared_ptr<const NoisyMixture> at(double t) {
      std::lock_guard<std::mutex> lock(mutex);
      auto it = cache.find(t);
      if (it != cache.end()) return it->second;
      if (cache.size() > 8192) cache.clear();
      const SchedulePoint p = schedule.eval(t);
      auto nm = std::make_shared<const NoisyMixture>(data, p.alpha, p.sigma);
      cache.emplace(t, nm);
      return nm;
    }
  };
  auto state = std::make_shared<State>(std::move(data), std::move(schedule));
  ScoreModel m;
  m.tag = tag;
  m.fn = [state, tag](const Vec& z, double t) -> Vec {
    const auto nm = state->at(t);
    switch (tag) {
      case Prediction::score: return nm->score(z);
      case Prediction::data: return nm->posterior_mean(z);
      case Prediction::noise: return -nm->sigma() * nm->score(z);
    }
    return nm->score(z);
  };
  return m;
}

// ---------------------------------------------------------------------------
// Reverse-time drift

/// f z - ((1 + rho^2) / 2) g^2 score(z, t). The matching diffusion is rho g(t).
inline Vec backward_drift(const Schedule& schedule, const ScoreModel& model, double rho, const Vec& z, double t) {
  const DriftDiffusion c = forward_coeffs(schedule, t);
  const Vec s = predict(model, Prediction::score, schedule, z, t);
  return c.f * z - 0.5 * (1.0 + rho * rho) * c.g * c.g * s;
}

/// Same drift written through the noise prediction:
/// alpha'/alpha z - ((1 + rho^2) / 2) e^{-lambda/2} lambda' alpha eps_hat.
inline Vec backward_drift_eps(const Schedule& schedule, const ScoreModel& model, double rho, const Vec& z, double t) {
  const SchedulePoint p = schedule.eval(t);
  const Vec eps = predict(model, Prediction::noise, schedule, z, t);
  return (p.dalpha_dt / p.alpha) * z -
         0.5 * (1.0 + rho * rho) * std::exp(-0.5 * p.lambda) * p.dlambda_dt * p.alpha * eps;
}

// ---------------------------------------------------------------------------
// Forward Euler-Maruyama

struct ForwardOptions {
  bool zero_noise = false;   // test hook: g forced to 0
  bool record_path = false;
};

struct ForwardPath {
  Vec final_state;
  std::vector<double> times;  // filled when record_path
  std::vector<Vec> states;    // filled when record_path, states[0] = z0
};

namespace detail {

struct ForwardPlan {
  std::vector<double> times;
  std::vector<double> drift_dt;   // f(t_k) dt
  std::vector<double> noise_amp;  // g(t_k) sqrt(dt)
};

inline ForwardPlan forward_plan(const Schedule& schedule, std::size_t steps, bool zero_noise) {
  if (steps < 1) throw ConfigError("euler_maruyama_forward needs steps >= 1");
  ForwardPlan plan;
  const double lo = schedule.t_min();
  const double hi = schedule.t_max();
  const double dt = (hi - lo) / static_cast<double>(steps);
  plan.times.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    plan.times[k] = (k == steps) ? hi : lo + dt * static_cast<double>(k);
  }
  plan.drift_dt.resize(steps);
  plan.noise_amp.resize(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const DriftDiffusion c = forward_coeffs(schedule, plan.times[k]);
    const double h = plan.times[k + 1] - plan.times[k];
    plan.drift_dt[k] = c.f * h;
    plan.noise_amp[k] = zero_noise ? 0.0 : c.g * std::sqrt(h);
  }
  return plan;
}

inline void forward_run(const ForwardPlan& plan, std::uint64_t seed, std::uint64_t path, Eigen::Ref<Vec> z, Vec& eps,
                        std::vector<Vec>* states) {
  const NoiseStream stream(seed, Stream::forward, path);
  eps.resize(z.size());
  const std::span<double> eps_span(eps.data(), static_cast<std::size_t>(eps.size()));
  for (std::size_t k = 0; k < plan.drift_dt.size(); ++k) {
    stream.normals(static_cast<std::uint32_t>(k), eps_span);
    z += plan.drift_dt[k] * z + plan.noise_amp[k] * eps;
    if (states) states->push_back(z);
  }
}

}  // namespace detail

/// Simulates dz = f z dt + g dw on a uniform grid over [t_min, t_max].
/// Noise for step k of path `path` comes from stream (seed, forward, path).
inline ForwardPath euler_maruyama_forward(const Schedule& schedule, const Vec& z0, std::size_t steps,
                                          std::uint64_t seed, ForwardOptions options = {}, std::uint64_t path = 0) {
  const detail::ForwardPlan plan = detail::forward_plan(schedule, steps, options.zero_noise);
  ForwardPath out;
  out.final_state = z0;
  Vec eps;
  if (options.record_path) {
    out.times = plan.times;
    out.states.reserve(steps + 1);
    out.states.push_back(z0);
  }
  detail::forward_run(plan, seed, path, out.final_state, eps, options.record_path ? &out.states : nullptr);
  return out;
}

/// Final states for many paths (row i starts from z0 and uses path id i).
inline SampleMatrix euler_maruyama_forward_batch(const Schedule& schedule, const Vec& z0, std::size_t steps,
                                                 std::size_t paths, std::uint64_t seed, std::size_t threads = 1,
                                                 ForwardOptions options = {}) {
  const detail::ForwardPlan plan = detail::forward_plan(schedule, steps, options.zero_noise);
  SampleMatrix out(static_cast<Eigen::Index>(paths), z0.size());
  parallel_for(paths, threads, [&](std::size_t i) {
    Vec z = z0;
    Vec eps;
    detail::forward_run(plan, seed, i, z, eps, nullptr);
    out.row(static_cast<Eigen::Index>(i)) = z.transpose();
  });
  return out;
}

}  // namespace s2n
