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

// MMSE and information derivatives of the channel z = alpha_tilde x + sigma_tilde eps.
//
// Both I(x; z) and KL(p(z|x) || p(z)) depend on the channel only through
// r = alpha_tilde^2 / sigma_tilde^2, which gives
//
//   dI/dlambda = (alpha_tilde' sigma_tilde - alpha_tilde sigma_tilde') alpha_tilde / sigma_tilde^3 * mmse(lambda)
//
// and the same with the pointwise MMSE for the conditional KL. For schedule
// points the prefactor is e^lambda / 2.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "s2n/error.hpp"
#include "s2n/gmm.hpp"
#include "s2n/parallel.hpp"
#include "s2n/random.hpp"
#include "s2n/schedule.hpp"
#include "s2n/snr_space.hpp"

namespace s2n {

struct InfoCurvePoint {
  double lambda = 0.0;
  double mmse = 0.0;
  double mmse_std_error = 0.0;  // 0 for closed forms
  double dmi_dlambda = 0.0;
  std::optional<double> mi_closed;
};

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Synthetic channel alpha_tilde = sqrt(snr), sigma_tilde = 1, indexed by
/// the SNR itself. Not a schedule point (the log-SNR identity does not hold).
inline SnrPoint kong_point(double snr) {
  if (!(snr > 0.0)) throw DomainError("kong channel needs snr > 0");
  SnrPoint p;
  p.lambda = snr;
  p.tilde_alpha = std::sqrt(snr);
  p.tilde_sigma = 1.0;
  p.dtilde_alpha_dlambda = 0.5 / std::sqrt(snr);
  p.dtilde_sigma_dlambda = 0.0;
  return p;
}

inline double channel_snr(const SnrPoint& p) { return (p.tilde_alpha * p.tilde_alpha) / (p.tilde_sigma * p.tilde_sigma); }

namespace detail {

inline Vec psd_eigenvalues(const Mat& S, const char* what) {
  if (S.rows() != S.cols() || S.rows() == 0) throw ConfigError(std::string(what) + ": covariance must be square");
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, S.cwiseAbs().maxCoeff())) {
    throw ConfigError(std::string(what) + ": covariance must be symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  const Vec ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff())) {
    throw ConfigError(std::string(what) + ": covariance must be positive semidefinite");
  }
  return ev.cwiseMax(0.0);
}

inline double prefactor(const SnrPoint& p) {
  if (!(p.tilde_sigma > 0.0)) throw DomainError("sigma_tilde must be positive");
  return (p.dtilde_alpha_dlambda * p.tilde_sigma - p.tilde_alpha * p.dtilde_sigma_dlambda) * p.tilde_alpha /
         (p.tilde_sigma * p.tilde_sigma * p.tilde_sigma);
}

}  // namespace detail

/// tr[(S^{-1} + r I)^{-1}] = sum_i s_i / (1 + r s_i) for data N(mu, S).
inline double mmse_gaussian(const Mat& S, const SnrPoint& p) {
  const Vec ev = detail::psd_eigenvalues(S, "mmse_gaussian");
  const double r = channel_snr(p);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) acc += ev[i] / (1.0 + r * ev[i]);
  return acc;
}

/// E_{z|x} |x - E[x|z]|^2 for data N(mu, S) at a fixed x:
/// sum over the eigenbasis of (d_i^2 + r s_i^2) / (1 + r s_i)^2, d = x - mu.
inline double pointwise_mmse_gaussian(const Mat& S, const Vec& mu, const Vec& x, const SnrPoint& p) {
  detail::psd_eigenvalues(S, "pointwise_mmse_gaussian");
  const Eigen::SelfAdjointEigenSolver<Mat> es(S);
  const Vec ev = es.eigenvalues().cwiseMax(0.0);
  const Vec d = es.eigenvectors().transpose() * (x - mu);
  const double r = channel_snr(p);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double den = 1.0 + r * ev[i];
    acc += (d[i] * d[i] + r * ev[i] * ev[i]) / (den * den);
  }
  return acc;
}

/// I(x; z) = 1/2 log det(I + r S).
inline double mi_gaussian_closed(const Mat& S, const SnrPoint& p) {
  const Vec ev = detail::psd_eigenvalues(S, "mi_gaussian_closed");
  const double r = channel_snr(p);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) acc += std::log1p(r * ev[i]);
  return 0.5 * acc;
}

/// KL(N(alpha x, sigma^2 I) || N(alpha mu, alpha^2 S + sigma^2 I)); after
/// dividing both covariances by sigma^2 this is
/// 1/2 [tr (I + rS)^{-1} + r d^T (I + rS)^{-1} d - D + log det(I + rS)].
inline double gaussian_conditional_kl(const Mat& S, const Vec& mu, const Vec& x, const SnrPoint& p) {
  detail::psd_eigenvalues(S, "gaussian_conditional_kl");
  const Eigen::SelfAdjointEigenSolver<Mat> es(S);
  const Vec ev = es.eigenvalues().cwiseMax(0.0);
  const Vec d = es.eigenvectors().transpose() * (x - mu);
  const double r = channel_snr(p);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double den = 1.0 + r * ev[i];
    acc += 1.0 / den - 1.0 + r * d[i] * d[i] / den + std::log1p(r * ev[i]);
  }
  return 0.5 * acc;
}

/// d KL(p(z|x) || p(z)) / d lambda from the pointwise MMSE at x.
inline double dkl_dlambda(const SnrPoint& p, double pointwise_mmse) { return detail::prefactor(p) * pointwise_mmse; }

/// d I(x; z) / d lambda from the MMSE.
inline double dmi_dlambda(const SnrPoint& p, double mmse) { return detail::prefactor(p) * mmse; }

/// Variant carrying an additional -D sigma_tilde' / (2 sigma_tilde) term.
/// Kept for comparison; it does not match finite differences unless
/// sigma_tilde is constant in lambda.
inline double dkl_dlambda_with_scale_term(const SnrPoint& p, int dim, double pointwise_mmse) {
  return -static_cast<double>(dim) * p.dtilde_sigma_dlambda / (2.0 * p.tilde_sigma) + dkl_dlambda(p, pointwise_mmse);
}

inline double dmi_dlambda_with_scale_term(const SnrPoint& p, int dim, double mmse) {
  return -static_cast<double>(dim) * p.dtilde_sigma_dlambda / (2.0 * p.tilde_sigma) + dmi_dlambda(p, mmse);
}

// ---------------------------------------------------------------------------
// Monte Carlo estimators (exact posterior mean plugged in)

namespace detail {

inline McEstimate summarize(const std::vector<double>& v) {
  McEstimate e;
  e.n = v.size();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  e.value = mean;
  e.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return e;
}

inline void check_mc(std::size_t n) {
  if (n < 100) throw ConfigError("Monte Carlo estimators need n >= 100");
}

}  // namespace detail

/// E |x - E[x|z]|^2 over joint draws. x uses the data stream and the channel
/// noise the monte_carlo stream, both keyed by (seed, draw index).
inline McEstimate mmse_mc(const GmmSpec& gmm, const SnrPoint& p, std::size_t n, std::uint64_t seed,
                          std::size_t threads = 1) {
  detail::check_mc(n);
  validate(gmm);
  const NoisyMixture channel(gmm, p.tilde_alpha, p.tilde_sigma);
  const std::vector<Mat> roots = covariance_roots(gmm);
  std::vector<double> err(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Vec x(gmm.dim);
    Vec eps;
    sample_one(gmm, roots, seed, i, x, eps);
    NoiseStream(seed, Stream::monte_carlo, i).normals(0, std::span<double>(eps.data(), static_cast<std::size_t>(eps.size())));
    const Vec z = p.tilde_alpha * x + p.tilde_sigma * eps;
    err[i] = (x - channel.posterior_mean(z)).squaredNorm();
  });
  return detail::summarize(err);
}

inline McEstimate mmse_mc(const GmmSpec& gmm, const Schedule& schedule, double lambda, std::size_t n,
                          std::uint64_t seed, std::size_t threads = 1) {
  return mmse_mc(gmm, tilde_eval(schedule, lambda), n, seed, threads);
}

/// E_{z|x} |x - E[x|z]|^2 at a fixed x.
inline McEstimate pointwise_mmse_mc(const GmmSpec& gmm, const SnrPoint& p, const Vec& x, std::size_t n,
                                    std::uint64_t seed, std::size_t threads = 1) {
  detail::check_mc(n);
  validate(gmm);
  if (x.size() != gmm.dim) throw ConfigError("pointwise_mmse_mc: x has the wrong dimension");
  const NoisyMixture channel(gmm, p.tilde_alpha, p.tilde_sigma);
  std::vector<double> err(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Vec eps(gmm.dim);
    NoiseStream(seed, Stream::monte_carlo, i).normals(0, std::span<double>(eps.data(), static_cast<std::size_t>(eps.size())));
    const Vec z = p.tilde_alpha * x + p.tilde_sigma * eps;
    err[i] = (x - channel.posterior_mean(z)).squaredNorm();
  });
  return detail::summarize(err);
}

inline McEstimate pointwise_mmse_mc(const GmmSpec& gmm, const Schedule& schedule, const Vec& x, double lambda,
                                    std::size_t n, std::uint64_t seed, std::size_t threads = 1) {
  return pointwise_mmse_mc(gmm, tilde_eval(schedule, lambda), x, n, seed, threads);
}

/// Information curve on the given channel points. Single-component data use
/// closed forms (and report mi_closed); mixtures use mmse_mc with n_mc draws.
inline std::vector<InfoCurvePoint> info_curve(const GmmSpec& gmm, const std::vector<SnrPoint>& points, std::size_t n_mc,
                                              std::uint64_t seed, std::size_t threads = 1) {
  validate(gmm);
  std::vector<InfoCurvePoint> out;
  out.reserve(points.size());
  const bool closed = gmm.components() == 1;
  for (const SnrPoint& p : points) {
    InfoCurvePoint c;
    c.lambda = p.lambda;
    if (closed) {
      c.mmse = mmse_gaussian(gmm.covs[0], p);
      c.mi_closed = mi_gaussian_closed(gmm.covs[0], p);
    } else {
      const McEstimate e = mmse_mc(gmm, p, n_mc, seed, threads);
      c.mmse = e.value;
      c.mmse_std_error = e.std_error;
    }
    c.dmi_dlambda = dmi_dlambda(p, c.mmse);
    out.push_back(c);
  }
  return out;
}

}  // namespace s2n
