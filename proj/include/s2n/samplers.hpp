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

// Backward-time samplers.
//
// All steppers map z_t to z_s for s < t and take their Gaussian draw as an
// explicit argument, so a step is a pure function of its inputs. The sampling
// loop keys draws by (seed, trajectory, step) which makes output independent
// of the number of worker threads.
//
// The generalized step integrates the linear part of the reverse SDE exactly
// and freezes the noise prediction at (z_t, t):
//
//   z_s = (a_s / a_t) z_t
//         - (1 + rho^2) / (1 + gamma) a_s e^{-l_t / 2} (1 - e^{-(1 + gamma)(l_s - l_t) / 2}) eps_hat
//         + rho s_t sqrt(1 - e^{-(l_s - l_t)}) (a_s / a_t)^{1 - delta} (s_s / s_t)^delta eps
//
// gamma = 1, delta = 1, rho = 1 is the DDPM posterior step; rho = 0, gamma = 0
// is DDIM.

#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "s2n/dynamics.hpp"
#include "s2n/error.hpp"
#include "s2n/gmm.hpp"
#include "s2n/parallel.hpp"
#include "s2n/random.hpp"
#include "s2n/schedule.hpp"
#include "s2n/snr_space.hpp"

namespace s2n {

enum class SamplerKind { generalized, kingma, non_markovian, euler_backward, exact_reference };
enum class GridKind { uniform_t, uniform_lambda };

inline std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::generalized: return "generalized";
    case SamplerKind::kingma: return "kingma";
    case SamplerKind::non_markovian: return "non_markovian";
    case SamplerKind::euler_backward: return "euler_backward";
    case SamplerKind::exact_reference: return "exact_reference";
  }
  return "?";
}

inline std::string to_string(GridKind g) { return g == GridKind::uniform_t ? "uniform_t" : "uniform_lambda"; }

inline SamplerKind parse_sampler_kind(const std::string& s) {
  for (auto k : {SamplerKind::generalized, SamplerKind::kingma, SamplerKind::non_markovian, SamplerKind::euler_backward,
                 SamplerKind::exact_reference}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown sampler kind '" + s + "'");
}

inline GridKind parse_grid_kind(const std::string& s) {
  if (s == "uniform_t") return GridKind::uniform_t;
  if (s == "uniform_lambda") return GridKind::uniform_lambda;
  throw ConfigError("unknown grid kind '" + s + "'");
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::generalized;
  double rho = 0.0;
  double gamma = 0.0;
  double delta = 1.0;
  double eta = 0.0;
  std::size_t steps = 200;
  GridKind grid = GridKind::uniform_lambda;
  std::optional<double> t_start;  // default: schedule t_max
  std::optional<double> t_end;    // default: schedule t_min
  std::uint64_t seed = 0;
  std::size_t substeps = 64;  // exact_reference only
};

inline double resolved_t_start(const SamplerConfig& c, const Schedule& s) { return c.t_start.value_or(s.t_max()); }
inline double resolved_t_end(const SamplerConfig& c, const Schedule& s) { return c.t_end.value_or(s.t_min()); }

/// Throws ConfigError on an unusable configuration. A negative delta is
/// accepted with a warning.
inline void validate(const SamplerConfig& c, const Schedule& schedule) {
  const double t0 = resolved_t_start(c, schedule);
  const double t1 = resolved_t_end(c, schedule);
  std::ostringstream os;
  os.precision(17);
  if (!schedule.contains(t0) || !schedule.contains(t1) || t1 > t0) {
    os << "need t_min <= t_end <= t_start <= t_max, got t_start=" << t0 << " t_end=" << t1 << " on ["
       << schedule.t_min() << ", " << schedule.t_max() << "]";
    throw ConfigError(os.str());
  }
  if (c.steps < 1) throw ConfigError("steps must be >= 1");
  if (!std::isfinite(c.rho) || !std::isfinite(c.gamma) || !std::isfinite(c.delta) || !std::isfinite(c.eta)) {
    throw ConfigError("sampler parameters must be finite");
  }
  if ((c.kind == SamplerKind::generalized || c.kind == SamplerKind::exact_reference) && c.gamma == -1.0) {
    throw ConfigError("gamma = -1 is not allowed for the generalized step");
  }
  if (c.kind == SamplerKind::non_markovian && !(c.eta >= 0.0 && c.eta <= 1.0)) {
    throw ConfigError("eta must lie in [0, 1]");
  }
  if (c.kind == SamplerKind::exact_reference && c.substeps < 1) throw ConfigError("substeps must be >= 1");
  if (c.delta < 0.0) warn("delta < 0 extrapolates the noise interpolation beyond its usual range");
}

// ---------------------------------------------------------------------------
// Mutation hook for the verification suite: when set, the generalized step
// uses the opposite sign on its noise-prediction term.

namespace testing {
inline std::atomic<bool>& bracket_sign_mutation() {
  static std::atomic<bool> flag{false};
  return flag;
}
}  // namespace testing

// ---------------------------------------------------------------------------
// Steppers

/// z_s = state z_t + eps eps_hat + noise draw.
struct StepCoefficients {
  double state = 1.0;
  double eps = 0.0;
  double noise = 0.0;
};

namespace detail {
inline void check_step(double t, double s) {
  if (s > t) {
    std::ostringstream os;
    os.precision(17);
    os << "backward step needs s <= t, got s=" << s << " t=" << t;
    throw DomainError(os.str());
  }
}

inline bool has_noise(const Vec& eps) { return eps.size() > 0; }
}  // namespace detail

inline StepCoefficients generalized_coefficients(const Schedule& schedule, double t, double s, double rho, double gamma,
                                                 double delta) {
  detail::check_step(t, s);
  if (gamma == -1.0) throw ConfigError("gamma = -1 is not allowed for the generalized step");
  const SchedulePoint pt = schedule.eval(t);
  const SchedulePoint ps = schedule.eval(s);
  StepCoefficients c;
  c.state = ps.alpha / pt.alpha;
  if (s == t) {
    c.state = 1.0;
    return c;
  }
  const double dl = ps.lambda - pt.lambda;  // > 0
  const double bracket = -std::expm1(-0.5 * (1.0 + gamma) * dl);
  const double sign = testing::bracket_sign_mutation().load(std::memory_order_relaxed) ? 1.0 : -1.0;
  c.eps = sign * (1.0 + rho * rho) / (1.0 + gamma) * ps.alpha * std::exp(-0.5 * pt.lambda) * bracket;
  if (rho != 0.0) {
    c.noise = rho * pt.sigma * std::sqrt(-std::expm1(-dl)) * std::pow(ps.alpha / pt.alpha, 1.0 - delta) *
              std::pow(ps.sigma / pt.sigma, delta);
  }
  return c;
}

/// One generalized (rho, gamma, delta) step. `eps` is the Gaussian draw; it
/// may be empty when rho = 0.
inline Vec step_generalized(const Schedule& schedule, const ScoreModel& model, const Vec& z_t, double t, double s,
                            double rho, double gamma, double delta, const Vec& eps) {
  const StepCoefficients c = generalized_coefficients(schedule, t, s, rho, gamma, delta);
  if (s == t) return z_t;
  const Vec eps_hat = predict(model, Prediction::noise, schedule, z_t, t);
  Vec z_s = c.state * z_t + c.eps * eps_hat;
  if (c.noise != 0.0) {
    if (!detail::has_noise(eps)) throw ConfigError("stochastic step needs a noise draw");
    z_s += c.noise * eps;
  }
  return z_s;
}

/// Ancestral step with the exact Gaussian posterior q(z_s | z_t, x = x_hat),
/// written through the score:
///   z_s = (a_s / a_t) z_t + a_s a_t (e^{-l_t} - e^{-l_s}) score + sigma_Q eps,
///   sigma_Q = a_t sqrt(e^{-l_t} - e^{-l_s}) s_s / s_t.
inline Vec step_kingma(const Schedule& schedule, const ScoreModel& model, const Vec& z_t, double t, double s,
                       const Vec& eps) {
  detail::check_step(t, s);
  if (s == t) return z_t;
  const SchedulePoint pt = schedule.eval(t);
  const SchedulePoint ps = schedule.eval(s);
  // e^{-l_t} - e^{-l_s} = e^{-l_t} (1 - e^{-(l_s - l_t)})
  const double var_gap = std::exp(-pt.lambda) * -std::expm1(pt.lambda - ps.lambda);
  const Vec score = predict(model, Prediction::score, schedule, z_t, t);
  Vec z_s = (ps.alpha / pt.alpha) * z_t + ps.alpha * pt.alpha * var_gap * score;
  if (!detail::has_noise(eps)) throw ConfigError("stochastic step needs a noise draw");
  const double sigma_q = pt.alpha * std::sqrt(var_gap) * ps.sigma / pt.sigma;
  z_s += sigma_q * eps;
  return z_s;
}

/// Noise variance of the non-Markovian step: eta^2 (sigma_t^2 - sigma_s^2)
/// clamped into [0, (1 - 1e-9) sigma_s^2].
inline double non_markovian_beta2(const Schedule& schedule, double t, double s, double eta) {
  const double sig_t = schedule.eval(t).sigma;
  const double sig_s = schedule.eval(s).sigma;
  const double raw = eta * eta * (sig_t * sig_t - sig_s * sig_s);
  return std::clamp(raw, 0.0, (1.0 - 1e-9) * sig_s * sig_s);
}

/// z_s = a_s x_hat + sqrt(sigma_s^2 - beta^2) (z_t - a_t x_hat) / sigma_t + beta eps.
inline Vec step_non_markovian(const Schedule& schedule, const ScoreModel& model, const Vec& z_t, double t, double s,
                              double eta, const Vec& eps) {
  detail::check_step(t, s);
  if (s == t) return z_t;
  const SchedulePoint pt = schedule.eval(t);
  const SchedulePoint ps = schedule.eval(s);
  const double beta2 = non_markovian_beta2(schedule, t, s, eta);
  const Vec x_hat = predict(model, Prediction::data, schedule, z_t, t);
  const double keep = std::sqrt(ps.sigma * ps.sigma - beta2) / pt.sigma;
  Vec z_s = ps.alpha * x_hat + keep * (z_t - pt.alpha * x_hat);
  if (beta2 > 0.0) {
    if (!detail::has_noise(eps)) throw ConfigError("stochastic step needs a noise draw");
    z_s += std::sqrt(beta2) * eps;
  }
  return z_s;
}

/// Euler-Maruyama step of the reverse SDE:
/// z_s = z_t + drift(z_t, t) (s - t) + rho g(t) sqrt(t - s) eps.
inline Vec step_euler_backward(const Schedule& schedule, const ScoreModel& model, const Vec& z_t, double t, double s,
                               double rho, const Vec& eps) {
  detail::check_step(t, s);
  if (s == t) return z_t;
  Vec z_s = z_t + backward_drift(schedule, model, rho, z_t, t) * (s - t);
  if (rho != 0.0) {
    if (!detail::has_noise(eps)) throw ConfigError("stochastic step needs a noise draw");
    z_s += rho * forward_coeffs(schedule, t).g * std::sqrt(t - s) * eps;
  }
  return z_s;
}

/// Sub-grid from t down to s, uniform in log-SNR, with exact endpoints.
inline std::vector<double> reference_subgrid(const Schedule& schedule, double t, double s, std::size_t substeps) {
  if (substeps < 1) throw ConfigError("substeps must be >= 1");
  std::vector<double> grid(substeps + 1);
  const double lt = schedule.eval(t).lambda;
  const double ls = schedule.eval(s).lambda;
  grid.front() = t;
  grid.back() = s;
  for (std::size_t k = 1; k < substeps; ++k) {
    grid[k] = t_of_lambda(schedule, lt + (ls - lt) * static_cast<double>(k) / static_cast<double>(substeps));
  }
  return grid;
}

/// Resolves [s, t] with generalized steps on `subgrid` (from reference_subgrid).
/// Sub-step k draws its noise as stream.normals(step, ., k).
inline Vec exact_reference(const Schedule& schedule, const ScoreModel& model, const Vec& z_t,
                           std::span<const double> subgrid, double rho, double gamma, double delta,
                           const NoiseStream& stream, std::uint32_t step) {
  Vec z = z_t;
  Vec eps;
  if (rho != 0.0) eps.resize(z_t.size());
  for (std::size_t k = 0; k + 1 < subgrid.size(); ++k) {
    if (rho != 0.0) {
      stream.normals(step, std::span<double>(eps.data(), static_cast<std::size_t>(eps.size())),
                     static_cast<std::uint32_t>(k));
    }
    z = step_generalized(schedule, model, z, subgrid[k], subgrid[k + 1], rho, gamma, delta, eps);
  }
  return z;
}

inline Vec exact_reference(const Schedule& schedule, const ScoreModel& model, const Vec& z_t, double t, double s,
                           double rho, double gamma, double delta, std::size_t substeps, const NoiseStream& stream,
                           std::uint32_t step) {
  detail::check_step(t, s);
  if (s == t) return z_t;
  const std::vector<double> grid = reference_subgrid(schedule, t, s, substeps);
  return exact_reference(schedule, model, z_t, grid, rho, gamma, delta, stream, step);
}

// ---------------------------------------------------------------------------
// Time grids and the sampling loop

/// steps + 1 strictly decreasing times from t_start to t_end (both exact).
inline std::vector<double> make_time_grid(const Schedule& schedule, GridKind kind, std::size_t steps, double t_start,
                                          double t_end) {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (!(t_end < t_start)) throw ConfigError("time grid needs t_end < t_start");
  if (!schedule.contains(t_start) || !schedule.contains(t_end)) throw DomainError("time grid endpoints outside window");
  std::vector<double> grid(steps + 1);
  grid.front() = t_start;
  grid.back() = t_end;
  const double n = static_cast<double>(steps);
  if (kind == GridKind::uniform_t) {
    for (std::size_t k = 1; k < steps; ++k) grid[k] = t_start + (t_end - t_start) * (static_cast<double>(k) / n);
  } else {
    const double l0 = schedule.eval(t_start).lambda;
    const double l1 = schedule.eval(t_end).lambda;
    for (std::size_t k = 1; k < steps; ++k) grid[k] = t_of_lambda(schedule, l0 + (l1 - l0) * (static_cast<double>(k) / n));
  }
  for (std::size_t k = 0; k < steps; ++k) {
    if (!(grid[k + 1] < grid[k])) throw NumericalError("time grid is not strictly decreasing (too many steps?)");
  }
  return grid;
}

struct Trajectory {
  std::size_t sample_id = 0;
  std::vector<double> times;   // decreasing
  std::vector<Vec> states;     // states[k] at times[k]
  std::vector<Vec> noises;     // noises[k] drawn for the step times[k] -> times[k+1] (empty if unused)
};

struct SampleResult {
  SampleMatrix samples;
  std::vector<Trajectory> trajectories;  // first `record` trajectories
};

namespace detail {

inline bool step_uses_noise(const SamplerConfig& c) {
  switch (c.kind) {
    case SamplerKind::generalized:
    case SamplerKind::euler_backward:
    case SamplerKind::exact_reference: return c.rho != 0.0;
    case SamplerKind::kingma: return true;
    case SamplerKind::non_markovian: return c.eta != 0.0;
  }
  return true;
}

}  // namespace detail

/// One configured step; draws its noise from `stream` at index `step`.
inline Vec apply_step(const Schedule& schedule, const ScoreModel& model, const SamplerConfig& c, const Vec& z, double t,
                      double s, const NoiseStream& stream, std::uint32_t step, Vec& eps,
                      std::span<const double> subgrid = {}) {
  if (c.kind == SamplerKind::exact_reference) {
    if (subgrid.empty()) return exact_reference(schedule, model, z, t, s, c.rho, c.gamma, c.delta, c.substeps, stream, step);
    return exact_reference(schedule, model, z, subgrid, c.rho, c.gamma, c.delta, stream, step);
  }
  if (detail::step_uses_noise(c)) {
    eps.resize(z.size());
    stream.normals(step, std::span<double>(eps.data(), static_cast<std::size_t>(eps.size())));
  } else {
    eps.resize(0);
  }
  switch (c.kind) {
    case SamplerKind::generalized: return step_generalized(schedule, model, z, t, s, c.rho, c.gamma, c.delta, eps);
    case SamplerKind::kingma: return step_kingma(schedule, model, z, t, s, eps);
    case SamplerKind::non_markovian: return step_non_markovian(schedule, model, z, t, s, c.eta, eps);
    case SamplerKind::euler_backward: return step_euler_backward(schedule, model, z, t, s, c.rho, eps);
    case SamplerKind::exact_reference: break;
  }
  return z;
}

/// Prior draw for trajectory `index`: sigma(t_start) N(0, I).
inline Vec prior_draw(const Schedule& schedule, double t_start, std::uint64_t seed, std::uint64_t index, int dim) {
  Vec z(dim);
  NoiseStream(seed, Stream::prior, index).normals(0, std::span<double>(z.data(), static_cast<std::size_t>(dim)));
  return schedule.eval(t_start).sigma * z;
}

/// Runs n independent backward trajectories in dimension `dim`.
/// Deterministic given config.seed for any thread count. Throws
/// NumericalError if any state becomes non-finite.
inline SampleResult sample(const Schedule& schedule, const ScoreModel& model, const SamplerConfig& config,
                           std::size_t n, int dim, std::size_t threads = 1, std::size_t record = 0) {
  validate(config, schedule);
  if (dim < 1) throw ConfigError("dim must be >= 1");
  const double t0 = resolved_t_start(config, schedule);
  const double t1 = resolved_t_end(config, schedule);
  std::vector<double> grid = (t1 < t0) ? make_time_grid(schedule, config.grid, config.steps, t0, t1)
                                       : std::vector<double>{t0};
  std::vector<std::vector<double>> subgrids;
  if (config.kind == SamplerKind::exact_reference) {
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
      subgrids.push_back(reference_subgrid(schedule, grid[k], grid[k + 1], config.substeps));
    }
  }
  record = std::min(record, n);
  SampleResult out;
  out.samples.resize(static_cast<Eigen::Index>(n), dim);
  out.trajectories.resize(record);

  parallel_for(n, threads, [&](std::size_t i) {
    Vec z = prior_draw(schedule, t0, config.seed, i, dim);
    const NoiseStream stream(config.seed, Stream::step, i);
    Trajectory* traj = (i < record) ? &out.trajectories[i] : nullptr;
    if (traj) {
      traj->sample_id = i;
      traj->times = grid;
      traj->states.push_back(z);
    }
    Vec eps;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
      const std::span<const double> sub =
          subgrids.empty() ? std::span<const double>{} : std::span<const double>(subgrids[k]);
      z = apply_step(schedule, model, config, z, grid[k], grid[k + 1], stream, static_cast<std::uint32_t>(k), eps, sub);
      if (!z.allFinite()) {
        std::ostringstream os;
        os.precision(17);
        os << "non-finite state in trajectory " << i << " at step " << k << " (t=" << grid[k + 1] << ")";
        throw NumericalError(os.str());
      }
      if (traj) {
        traj->states.push_back(z);
        traj->noises.push_back(eps);
      }
    }
    out.samples.row(static_cast<Eigen::Index>(i)) = z.transpose();
  });
  return out;
}

}  // namespace s2n
