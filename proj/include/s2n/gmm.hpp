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

// Gaussian-mixture data with closed-form noisy marginals.
//
// Under z = alpha x + sigma eps, component i of the data maps to
// N(alpha mu_i, alpha^2 S_i + sigma^2 I) with the same weight, so the score
// and E[x | z] are available exactly. These serve as ground truth wherever a
// trained network would normally sit.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "s2n/error.hpp"
#include "s2n/parallel.hpp"
#include "s2n/random.hpp"
#include "s2n/schedule.hpp"

namespace s2n {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Rows are samples.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kMaxFullCovDim = 16;
inline constexpr double kCovFloor = 1e-12;

struct GmmSpec {
  int dim = 0;
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Mat> covs;

  std::size_t components() const { return weights.size(); }
};

inline bool is_diagonal(const Mat& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != 0.0) return false;
  return true;
}

/// Throws ConfigError unless weights are positive and sum to 1 (1e-12),
/// shapes agree, and every covariance is symmetric PSD.
inline void validate(const GmmSpec& g) {
  if (g.dim <= 0) throw ConfigError("GMM dim must be positive");
  if (g.weights.empty()) throw ConfigError("GMM needs at least one component");
  if (g.means.size() != g.weights.size() || g.covs.size() != g.weights.size()) {
    throw ConfigError("GMM weights/means/covs length mismatch");
  }
  double total = 0.0;
  for (double w : g.weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("GMM weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "GMM weights sum to " << total << ", expected 1";
    throw ConfigError(os.str());
  }
  for (std::size_t i = 0; i < g.components(); ++i) {
    const Vec& mu = g.means[i];
    const Mat& c = g.covs[i];
    if (mu.size() != g.dim) throw ConfigError("GMM mean has wrong dimension");
    if (c.rows() != g.dim || c.cols() != g.dim) throw ConfigError("GMM covariance has wrong shape");
    if (!mu.allFinite() || !c.allFinite()) throw ConfigError("GMM parameters must be finite");
    const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw ConfigError("GMM covariance not symmetric");
    if (g.dim > kMaxFullCovDim && !is_diagonal(c)) {
      throw ConfigError("full covariances are limited to dim <= 16; use diagonal covariances");
    }
    const Eigen::SelfAdjointEigenSolver<Mat> es(c, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * scale) throw ConfigError("GMM covariance not positive semidefinite");
  }
}

inline GmmSpec make_gmm(std::vector<double> weights, std::vector<Vec> means, std::vector<Mat> covs) {
  GmmSpec g;
  g.dim = means.empty() ? 0 : static_cast<int>(means.front().size());
  g.weights = std::move(weights);
  g.means = std::move(means);
  g.covs = std::move(covs);
  validate(g);
  return g;
}

/// Single Gaussian N(mu, cov).
inline GmmSpec make_gaussian(const Vec& mu, const Mat& cov) { return make_gmm({1.0}, {mu}, {cov}); }

inline Vec mixture_mean(const GmmSpec& g) {
  Vec m = Vec::Zero(g.dim);
  for (std::size_t i = 0; i < g.components(); ++i) m += g.weights[i] * g.means[i];
  return m;
}

inline Mat mixture_cov(const GmmSpec& g) {
  const Vec m = mixture_mean(g);
  Mat c = Mat::Zero(g.dim, g.dim);
  for (std::size_t i = 0; i < g.components(); ++i) {
    const Vec d = g.means[i] - m;
    c += g.weights[i] * (g.covs[i] + d * d.transpose());
  }
  return c;
}

/// Law of alpha x + sigma eps: means alpha mu_i, covs alpha^2 S_i + sigma^2 I.
inline GmmSpec marginal_at(const GmmSpec& g, double alpha, double sigma) {
  GmmSpec out = g;
  for (std::size_t i = 0; i < g.components(); ++i) {
    out.means[i] = alpha * g.means[i];
    out.covs[i] = alpha * alpha * g.covs[i];
    out.covs[i].diagonal().array() += sigma * sigma;
  }
  return out;
}

inline GmmSpec marginal_at(const GmmSpec& g, const Schedule& schedule, double t) {
  const SchedulePoint p = schedule.eval(t);
  return marginal_at(g, p.alpha, p.sigma);
}

/// Precomputed factorizations of the noisy mixture at one (alpha, sigma).
/// Immutable after construction; safe to share between threads.
class NoisyMixture {
 public:
  NoisyMixture(const GmmSpec& data, double alpha, double sigma) : data_(&data), alpha_(alpha), sigma_(sigma) {
    const std::size_t k = data.components();
    comps_.reserve(k);
    bool regularized = false;
    for (std::size_t i = 0; i < k; ++i) {
      Component c;
      c.mean = alpha * data.means[i];
      Mat cov = alpha * alpha * data.covs[i];
      cov.diagonal().array() += sigma * sigma;
      c.diagonal = is_diagonal(cov);
      if (c.diagonal) {
        c.diag = cov.diagonal();
        if (c.diag.minCoeff() < kCovFloor) {
          c.diag = c.diag.cwiseMax(0.0).array() + kCovFloor;
          regularized = true;
        }
        c.log_det = c.diag.array().log().sum();
      } else {
        c.llt.compute(cov);
        if (c.llt.info() != Eigen::Success || c.llt.matrixL().toDenseMatrix().diagonal().minCoeff() < std::sqrt(kCovFloor)) {
          cov.diagonal().array() += kCovFloor;
          c.llt.compute(cov);
          regularized = true;
          if (c.llt.info() != Eigen::Success) throw NumericalError("noisy component covariance is singular");
        }
        c.log_det = 2.0 * c.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      }
      c.log_weight = std::log(data.weights[i]);
      comps_.push_back(std::move(c));
    }
    if (regularized) warn("noisy GMM covariance regularized with 1e-12 I");
  }

  int dim() const { return data_->dim; }
  double alpha() const { return alpha_; }
  double sigma() const { return sigma_; }

  /// log p(z) of the noisy mixture.
  double log_density(const Vec& z) const {
    Vec scratch(z.size());
    std::vector<double> logs(comps_.size());
    for (std::size_t i = 0; i < comps_.size(); ++i) logs[i] = component_log_density(i, z, scratch);
    return log_sum_exp(logs);
  }

  /// Component responsibilities r_i(z) and whitened residuals C_i^{-1}(m_i - z).
  void responsibilities(const Vec& z, std::vector<double>& resp, std::vector<Vec>& precision_residual) const {
    const std::size_t k = comps_.size();
    resp.resize(k);
    precision_residual.resize(k);
    Vec scratch(z.size());
    for (std::size_t i = 0; i < k; ++i) {
      const Component& c = comps_[i];
      const Vec diff = c.mean - z;
      precision_residual[i] = c.diagonal ? Vec(diff.cwiseQuotient(c.diag)) : Vec(c.llt.solve(diff));
      resp[i] = c.log_weight - 0.5 * diff.dot(precision_residual[i]) - 0.5 * c.log_det -
                0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
    }
    const double lse = log_sum_exp(resp);
    for (double& r : resp) r = std::exp(r - lse);
  }

  /// grad_z log p(z) = sum_i r_i C_i^{-1} (m_i - z).
  Vec score(const Vec& z) const {
    std::vector<double> resp;
    std::vector<Vec> pr;
    responsibilities(z, resp, pr);
    Vec s = Vec::Zero(z.size());
    for (std::size_t i = 0; i < resp.size(); ++i) s += resp[i] * pr[i];
    return s;
  }

  /// E[x | z] = sum_i r_i (mu_i + alpha S_i C_i^{-1} (z - m_i)).
  Vec posterior_mean(const Vec& z) const {
    std::vector<double> resp;
    std::vector<Vec> pr;
    responsibilities(z, resp, pr);
    Vec m = Vec::Zero(z.size());
    for (std::size_t i = 0; i < resp.size(); ++i) {
      m += resp[i] * (data_->means[i] - alpha_ * (data_->covs[i] * pr[i]));
    }
    return m;
  }

 private:
  struct Component {
    Vec mean;
    bool diagonal = false;
    Vec diag;
    Eigen::LLT<Mat> llt;
    double log_det = 0.0;
    double log_weight = 0.0;
  };

  static double log_sum_exp(const std::vector<double>& v) {
    const double mx = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(mx)) return mx;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return mx + std::log(acc);
  }

  double component_log_density(std::size_t i, const Vec& z, Vec& scratch) const {
    const Component& c = comps_[i];
    scratch = z - c.mean;
    double quad = 0.0;
    if (c.diagonal) {
      quad = scratch.cwiseAbs2().cwiseQuotient(c.diag).sum();
    } else {
      quad = c.llt.matrixL().solve(scratch).squaredNorm();
    }
    return c.log_weight - 0.5 * quad - 0.5 * c.log_det -
           0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
  }

  const GmmSpec* data_;
  double alpha_;
  double sigma_;
  std::vector<Component> comps_;
};

inline Vec exact_score(const GmmSpec& g, const Schedule& schedule, double t, const Vec& z) {
  const SchedulePoint p = schedule.eval(t);
  return NoisyMixture(g, p.alpha, p.sigma).score(z);
}

inline Vec posterior_mean(const GmmSpec& g, const Schedule& schedule, double t, const Vec& z) {
  const SchedulePoint p = schedule.eval(t);
  return NoisyMixture(g, p.alpha, p.sigma).posterior_mean(z);
}

/// log density of the noisy marginal at t.
inline double log_marginal_density(const GmmSpec& g, const Schedule& schedule, double t, const Vec& z) {
  const SchedulePoint p = schedule.eval(t);
  return NoisyMixture(g, p.alpha, p.sigma).log_density(z);
}

/// Square-root factors A_i with A_i A_i^T = S_i (eigen-based, so PSD-singular
/// covariances are fine).
inline std::vector<Mat> covariance_roots(const GmmSpec& g) {
  std::vector<Mat> roots;
  roots.reserve(g.components());
  for (const Mat& c : g.covs) {
    if (is_diagonal(c)) {
      roots.push_back(c.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal());
      continue;
    }
    const Eigen::SelfAdjointEigenSolver<Mat> es(c);
    roots.push_back(es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal());
  }
  return roots;
}

/// Component index chosen by inverse-CDF on u in [0, 1).
inline std::size_t pick_component(const GmmSpec& g, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < g.components(); ++i) {
    acc += g.weights[i];
    if (u < acc) return i;
  }
  return g.components() - 1;
}

/// Draws x_i from the mixture into `out`, keyed by (seed, sample index).
inline void sample_one(const GmmSpec& g, const std::vector<Mat>& roots, std::uint64_t seed, std::uint64_t index,
                       Eigen::Ref<Vec> out, Vec& eps) {
  const NoiseStream stream(seed, Stream::data, index);
  const std::size_t c = pick_component(g, stream.uniform(0));
  eps.resize(g.dim);
  stream.normals(0, std::span<double>(eps.data(), static_cast<std::size_t>(eps.size())));
  out = g.means[c] + roots[c] * eps;
}

/// n i.i.d. draws (rows). Deterministic in seed, independent of `threads`.
inline SampleMatrix sample_data(const GmmSpec& g, std::size_t n, std::uint64_t seed, std::size_t threads = 1) {
  if (n < 1) throw ConfigError("sample_data needs n >= 1");
  validate(g);
  const std::vector<Mat> roots = covariance_roots(g);
  SampleMatrix x(static_cast<Eigen::Index>(n), g.dim);
  parallel_for(n, threads, [&](std::size_t i) {
    Vec row(g.dim);
    Vec eps;
    sample_one(g, roots, seed, i, row, eps);
    x.row(static_cast<Eigen::Index>(i)) = row.transpose();
  });
  return x;
}

}  // namespace s2n
