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

// Self-check suite behind `s2ndiff verify`. The fast level runs algebraic
// identities in well under a second; the full level adds Monte Carlo and
// convergence studies.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "s2n/dynamics.hpp"
#include "s2n/gmm.hpp"
#include "s2n/infotheory.hpp"
#include "s2n/random.hpp"
#include "s2n/samplers.hpp"
#include "s2n/schedule.hpp"
#include "s2n/snr_space.hpp"

namespace s2n {

enum class VerifyLevel { fast, full };

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace verify_detail {

inline std::vector<Schedule> builtin_schedules() {
  return {make_schedule(ScheduleFamily::vp), make_schedule(ScheduleFamily::ve), make_schedule(ScheduleFamily::iddpm),
          make_schedule(ScheduleFamily::fm_ot)};
}

inline double rel_err(double a, double b, double floor = 1.0) {
  return std::abs(a - b) / std::max(floor, std::max(std::abs(a), std::abs(b)));
}

/// Deterministic uniforms for check inputs.
class Draws {
 public:
  explicit Draws(std::uint64_t seed) : stream_(seed, Stream::monte_carlo, 0xC0FFEE) {}
  double uniform() { return stream_.uniform(counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return stream_.normal(counter_++); }
  Vec normals(int d) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

 private:
  NoiseStream stream_;
  std::uint32_t counter_ = 0;
};

struct Outcome {
  bool passed = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok && passed) detail << what << "; ";
    passed = passed && ok;
  }
};

// --- fast checks -----------------------------------------------------------

inline void schedule_identities(Outcome& o) {
  double worst_identity = 0.0, worst_cross = 0.0, worst_fd = 0.0;
  for (const Schedule& s : builtin_schedules()) {
    const double lo = s.t_min(), hi = s.t_max();
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 1000; ++i) {
      const double t = lo + (hi - lo) * i / 999.0;
      const SchedulePoint p = s.eval(t);
      o.require(p.lambda < prev, s.name() + ": lambda not strictly decreasing");
      prev = p.lambda;
      worst_identity = std::max(worst_identity, rel_err(p.sigma, p.alpha * std::exp(-0.5 * p.lambda), 0.0));
      worst_cross =
          std::max(worst_cross, rel_err(p.dlambda_dt, 2.0 * (p.dalpha_dt / p.alpha - p.dsigma_dt / p.sigma), 0.0));
      if (t - 1e-6 > lo + 1e-3 && t + 1e-6 < hi - 1e-3) {
        const SchedulePoint a = s.eval(t + 1e-6), b = s.eval(t - 1e-6);
        worst_fd = std::max(worst_fd, rel_err(p.dlambda_dt, (a.lambda - b.lambda) / 2e-6, 1e-8));
        if (std::abs(p.dalpha_dt) > 1e-8) worst_fd = std::max(worst_fd, rel_err(p.dalpha_dt, (a.alpha - b.alpha) / 2e-6, 0.0));
      }
    }
  }
  o.require(worst_identity <= 1e-12, "sigma = alpha e^{-lambda/2} violated");
  o.require(worst_cross <= 1e-9, "lambda' cross-check violated");
  o.require(worst_fd <= 1e-5, "finite-difference derivative check violated");
  o.detail << "identity " << worst_identity << ", cross " << worst_cross << ", fd " << worst_fd;
}

inline void chapman_kolmogorov(Outcome& o) {
  Draws d(11);
  double worst = 0.0;
  for (const Schedule& s : builtin_schedules()) {
    for (int i = 0; i < 100; ++i) {
      double u[3] = {d.uniform(s.t_min(), s.t_max()), d.uniform(s.t_min(), s.t_max()), d.uniform(s.t_min(), s.t_max())};
      std::sort(u, u + 3);
      const TransitionKernel rs = transition(s, u[0], u[1]);
      const TransitionKernel st = transition(s, u[1], u[2]);
      const TransitionKernel rt = transition(s, u[0], u[2]);
      worst = std::max(worst, rel_err(rt.mean_coeff, rs.mean_coeff * st.mean_coeff, 0.0));
      worst = std::max(worst, rel_err(rt.variance, st.mean_coeff * st.mean_coeff * rs.variance + st.variance, 1e-300));
    }
  }
  o.require(worst <= 1e-10, "composition identity violated");
  o.detail << "max relative error " << worst;
}

inline void variance_identity(Outcome& o) {
  double worst = 0.0;
  for (const Schedule& s : builtin_schedules()) {
    for (int i = 0; i <= 100; ++i) {
      const double t = s.t_min() + (s.t_max() - s.t_min()) * i / 100.0;
      const DriftDiffusion c = forward_coeffs(s, t);
      const SchedulePoint p = s.eval(t);
      const double lhs = c.g * c.g + 2.0 * c.f * p.sigma * p.sigma;
      worst = std::max(worst, rel_err(lhs, 2.0 * p.sigma * p.dsigma_dt, 1e-12));
    }
  }
  o.require(worst <= 1e-9, "g^2 + 2 f sigma^2 = (sigma^2)' violated");
  o.detail << "max relative error " << worst;
}

inline void asymptotic_recovery(Outcome& o) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const double t = 0.5;
  const DriftDiffusion c = forward_coeffs(s, t);
  double prev_f = 0.0, prev_g = 0.0;
  double h = 1e-2;
  for (int k = 0; k < 6; ++k, h *= 0.5) {
    const TransitionKernel tk = transition(s, t, t + h);
    const double ef = std::abs((tk.mean_coeff - 1.0) / h - c.f);
    const double eg = std::abs(tk.variance / h - c.g * c.g);
    if (k > 0) {
      const double rf = prev_f / ef, rg = prev_g / eg;
      o.require(rf >= 1.7 && rf <= 2.3 && rg >= 1.7 && rg <= 2.3, "Richardson ratio outside [1.7, 2.3]");
      if (k == 5) o.detail << "last ratios f " << rf << ", g^2 " << rg;
    }
    prev_f = ef;
    prev_g = eg;
  }
}

inline GmmSpec two_blob_mixture() {
  Mat c1(2, 2), c2(2, 2);
  c1 << 0.5, 0.1, 0.1, 0.3;
  c2 << 0.2, -0.05, -0.05, 0.4;
  Vec m1(2), m2(2);
  m1 << -1.0, 0.5;
  m2 << 1.5, -0.5;
  return make_gmm({0.4, 0.6}, {m1, m2}, {c1, c2});
}

inline void tweedie(Outcome& o) {
  const GmmSpec g = two_blob_mixture();
  Draws d(12);
  double worst = 0.0;
  for (const Schedule& s : builtin_schedules()) {
    for (int i = 0; i < 50; ++i) {
      const double t = d.uniform(s.t_min(), s.t_max());
      const Vec z = d.normals(2) * 2.0;
      const SchedulePoint p = s.eval(t);
      const Vec via_score = (z + p.sigma * p.sigma * exact_score(g, s, t, z)) / p.alpha;
      const Vec direct = posterior_mean(g, s, t, z);
      worst = std::max(worst, (via_score - direct).norm() / std::max(1.0, direct.norm()));
    }
  }
  o.require(worst <= 1e-10, "posterior mean disagrees with score");
  o.detail << "max relative error " << worst;
}

inline void prediction_roundtrip(Outcome& o) {
  const GmmSpec g = two_blob_mixture();
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(g, s);
  const ScoreModel back = convert_score_model(convert_score_model(m, Prediction::noise, s), Prediction::score, s);
  Draws d(13);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double t = d.uniform(0.05, 1.0);
    const Vec z = d.normals(2);
    const Vec a = m(z, t), b = back(z, t);
    worst = std::max(worst, (a - b).norm() / std::max(1.0, a.norm()));
  }
  o.require(worst <= 1e-12, "score -> eps -> score is not the identity");
  o.detail << "max relative error " << worst;
}

template <typename Fn>
inline double over_random_steps(std::uint64_t seed, Fn&& fn) {
  const GmmSpec g = two_blob_mixture();
  Draws d(seed);
  double worst = 0.0;
  for (const Schedule& sch : builtin_schedules()) {
    const ScoreModel m = oracle_model(g, sch, Prediction::noise);
    for (int i = 0; i < 25; ++i) {
      const double a = d.uniform(sch.t_min(), sch.t_max()), b = d.uniform(sch.t_min(), sch.t_max());
      const double t = std::max(a, b), s = std::min(a, b);
      const Vec z = d.normals(2), eps = d.normals(2);
      worst = std::max(worst, fn(sch, m, z, t, s, eps));
    }
  }
  return worst;
}

inline void kingma_equality(Outcome& o) {
  const double worst = over_random_steps(14, [](const Schedule& sch, const ScoreModel& m, const Vec& z, double t,
                                                double s, const Vec& eps) {
    const Vec a = step_generalized(sch, m, z, t, s, 1.0, 1.0, 1.0, eps);
    const Vec b = step_kingma(sch, m, z, t, s, eps);
    return (a - b).norm() / std::max(1.0, b.norm());
  });
  o.require(worst <= 1e-12, "generalized(1,1,1) differs from the Kingma step");
  o.detail << "max relative error " << worst;
}

inline void deterministic_equality(Outcome& o) {
  const double worst = over_random_steps(15, [](const Schedule& sch, const ScoreModel& m, const Vec& z, double t,
                                                double s, const Vec&) {
    const Vec a = step_generalized(sch, m, z, t, s, 0.0, 0.0, 1.0, Vec());
    const SchedulePoint pt = sch.eval(t), ps = sch.eval(s);
    const Vec b = (ps.alpha / pt.alpha) * z -
                  ps.alpha * (std::exp(-0.5 * pt.lambda) - std::exp(-0.5 * ps.lambda)) * m(z, t);
    return (a - b).norm() / std::max(1.0, b.norm());
  });
  o.require(worst <= 1e-12, "generalized(rho=0, gamma=0) differs from the DDIM step");
  o.detail << "max relative error " << worst;
}

inline void non_markovian_deterministic(Outcome& o) {
  const double worst = over_random_steps(16, [](const Schedule& sch, const ScoreModel& m, const Vec& z, double t,
                                                double s, const Vec& eps) {
    const Vec a = step_non_markovian(sch, m, z, t, s, 0.0, eps);
    const Vec b = step_generalized(sch, m, z, t, s, 0.0, 0.0, 1.0, Vec());
    return (a - b).norm() / std::max(1.0, b.norm());
  });
  o.require(worst <= 1e-10, "non-Markovian eta=0 differs from DDIM");
  o.detail << "max relative error " << worst;
}

inline void lambda_inversion(Outcome& o) {
  Draws d(17);
  double worst = 0.0;
  for (const Schedule& s : builtin_schedules()) {
    for (int i = 0; i < 100; ++i) {
      const double t = d.uniform(s.t_min(), s.t_max());
      worst = std::max(worst, std::abs(t_of_lambda(s, s.eval(t).lambda) - t));
    }
  }
  o.require(worst <= 1e-10, "t_of_lambda(lambda(t)) != t");
  o.detail << "max abs error " << worst;
}

inline void snr_equivalence(Outcome& o) {
  const Schedule vp = make_schedule(ScheduleFamily::vp);
  const Schedule warped = time_warp(vp, bend_warp(vp.t_min(), vp.t_max(), 0.4));
  const EquivalenceReport same = equivalence_check(vp, warped, 200, 1e-10);
  const EquivalenceReport diff = equivalence_check(vp, make_schedule(ScheduleFamily::ve), 200, 1e-10);
  o.require(same.equivalent, "warped VP not equivalent to VP");
  o.require(!diff.equivalent, "VP reported equivalent to VE");
  o.detail << "warped deviation " << same.max_deviation << ", VE deviation " << diff.max_deviation;
}

inline void info_derivatives(Outcome& o) {
  Mat S(1, 1);
  S << 1.0;
  double worst = 0.0;
  const double h = 1e-4;
  for (const Schedule& s : builtin_schedules()) {
    const auto [lo, hi] = lambda_range(s);
    for (int i = 0; i < 50; ++i) {
      const double lam = lo + 0.01 + (hi - lo - 0.02) * i / 49.0;
      const SnrPoint p = tilde_eval(s, lam);
      const double fd = (mi_gaussian_closed(S, tilde_eval(s, lam + h)) - mi_gaussian_closed(S, tilde_eval(s, lam - h))) / (2 * h);
      worst = std::max(worst, rel_err(dmi_dlambda(p, mmse_gaussian(S, p)), fd, 1e-12));
    }
  }
  o.require(worst <= 1e-6, "dI/dlambda disagrees with finite differences");
  o.detail << "max relative error " << worst;
}

// --- full checks -----------------------------------------------------------

inline void forward_marginal(Outcome& o, std::size_t threads) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  Vec z0(1);
  z0 << 1.0;
  const std::size_t paths = 100000;
  const SampleMatrix zt = euler_maruyama_forward_batch(s, z0, 1000, paths, 2024, threads);
  double mean = 0.0, var = 0.0;
  for (Eigen::Index i = 0; i < zt.rows(); ++i) mean += zt(i, 0);
  mean /= static_cast<double>(paths);
  for (Eigen::Index i = 0; i < zt.rows(); ++i) var += (zt(i, 0) - mean) * (zt(i, 0) - mean);
  var /= static_cast<double>(paths - 1);
  const SchedulePoint p = s.eval(s.t_max());
  const double mc_sigma = std::sqrt(var / static_cast<double>(paths));
  o.require(std::abs(mean - p.alpha) <= 3.0 * mc_sigma, "forward mean outside 3 MC sigma");
  o.require(std::abs(var / (p.sigma * p.sigma) - 1.0) <= 0.02, "forward variance off by more than 2%");
  o.detail << "mean " << mean << " (target " << p.alpha << "), variance ratio " << var / (p.sigma * p.sigma);
}

/// Gap between two steppers over a step of size h ending at s = t - h.
template <typename A, typename B>
inline std::vector<double> step_gaps(A&& a, B&& b, double t, double h0, int levels) {
  std::vector<double> gaps;
  double h = h0;
  for (int k = 0; k < levels; ++k, h *= 0.5) gaps.push_back((a(t, t - h) - b(t, t - h)).norm());
  return gaps;
}

inline void order_of_accuracy(Outcome& o) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  Vec mu(1);
  mu << 0.3;
  Mat S(1, 1);
  S << 0.8;
  const ScoreModel m = oracle_model(make_gaussian(mu, S), s);
  Vec z(1);
  z << 0.7;
  const auto gaps = step_gaps([&](double t, double u) { return step_generalized(s, m, z, t, u, 0.0, 0.0, 1.0, Vec()); },
                              [&](double t, double u) { return step_euler_backward(s, m, z, t, u, 0.0, Vec()); }, 0.5,
                              0.02, 5);
  for (std::size_t k = 1; k < gaps.size(); ++k) {
    const double r = gaps[k - 1] / gaps[k];
    o.require(r >= 3.0 && r <= 5.0, "one-step gap ratio outside [3, 5]");
    if (k + 1 == gaps.size()) o.detail << "last ratio " << r;
  }
}

/// Exact variance of the deterministic DDIM sampler on N(0, 1) data under VP:
/// the map is linear, so the response to z = 1 is the variance multiplier.
inline double ddim_variance(std::size_t steps) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  Vec mu(1);
  mu << 0.0;
  Mat S(1, 1);
  S << 1.0;
  const ScoreModel m = oracle_model(make_gaussian(mu, S), s);
  const std::vector<double> grid = make_time_grid(s, GridKind::uniform_lambda, steps, s.t_max(), s.t_min());
  Vec z(1);
  z << 1.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) z = step_generalized(s, m, z, grid[k], grid[k + 1], 0.0, 0.0, 1.0, Vec());
  const double prior_sd = s.eval(s.t_max()).sigma;
  return z[0] * z[0] * prior_sd * prior_sd;
}

inline void end_to_end_convergence(Outcome& o) {
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t steps : {25, 50, 100, 200, 400}) {
    const double err = std::abs(ddim_variance(steps) - 1.0);
    o.require(err < prev, "variance error did not decrease with more steps");
    o.detail << steps << ":" << err << " ";
    prev = err;
  }
}

}  // namespace verify_detail

/// Runs the named checks for `level`. A check that throws counts as failed.
inline std::vector<CheckResult> run_verification(VerifyLevel level, std::size_t threads = 1) {
  using namespace verify_detail;
  std::vector<std::pair<std::string, std::function<void(Outcome&)>>> checks = {
      {"schedule_identities", schedule_identities},
      {"chapman_kolmogorov", chapman_kolmogorov},
      {"variance_identity", variance_identity},
      {"asymptotic_recovery", asymptotic_recovery},
      {"tweedie_consistency", tweedie},
      {"prediction_roundtrip", prediction_roundtrip},
      {"kingma_equality", kingma_equality},
      {"deterministic_equality", deterministic_equality},
      {"non_markovian_eta0", non_markovian_deterministic},
      {"lambda_inversion", lambda_inversion},
      {"snr_equivalence", snr_equivalence},
      {"info_derivatives", info_derivatives},
  };
  if (level == VerifyLevel::full) {
    checks.emplace_back("forward_marginal", [threads](Outcome& o) { forward_marginal(o, threads); });
    checks.emplace_back("order_of_accuracy", order_of_accuracy);
    checks.emplace_back("end_to_end_convergence", end_to_end_convergence);
  }
  std::vector<CheckResult> results;
  for (auto& [name, fn] : checks) {
    CheckResult r;
    r.name = name;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      fn(o);
      r.passed = o.passed;
      r.detail = o.detail.str();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("threw: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace s2n
