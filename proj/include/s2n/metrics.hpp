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

// Sample-set comparisons. Every statistic first sorts the rows
// lexicographically, so results are bit-identical under any permutation of
// the input and for any thread count.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "s2n/error.hpp"
#include "s2n/gmm.hpp"
#include "s2n/parallel.hpp"

namespace s2n {

struct SampleQualityReport {
  std::size_t n = 0;
  int dim = 0;
  double mean_error_l2 = 0.0;
  double cov_frobenius_error = 0.0;  // relative to |target cov|_F
  std::optional<double> energy_distance;
  std::optional<double> gaussian_kl;  // single-Gaussian targets only
};

namespace detail {

inline SampleMatrix sorted_rows(const SampleMatrix& x) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
    }
    return false;
  });
  SampleMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

/// Empirical mean and unbiased covariance of sorted rows.
inline std::pair<Vec, Mat> empirical_moments(const SampleMatrix& sorted) {
  const Eigen::Index n = sorted.rows();
  Vec mean = Vec::Zero(sorted.cols());
  for (Eigen::Index i = 0; i < n; ++i) mean += sorted.row(i).transpose();
  mean /= static_cast<double>(n);
  Mat cov = Mat::Zero(sorted.cols(), sorted.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec d = sorted.row(i).transpose() - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(n - 1);
  return {mean, cov};
}

/// Mean pairwise distance (1 / (n_a n_b)) sum_ij |a_i - b_j|. Row partial
/// sums are combined in index order.
inline double mean_pair_distance(const SampleMatrix& a, const SampleMatrix& b, std::size_t threads) {
  std::vector<double> partial(static_cast<std::size_t>(a.rows()));
  parallel_for(partial.size(), threads, [&](std::size_t i) {
    double acc = 0.0;
    const auto ai = a.row(static_cast<Eigen::Index>(i));
    for (Eigen::Index j = 0; j < b.rows(); ++j) acc += (ai - b.row(j)).norm();
    partial[i] = acc;
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace detail

/// Empirical mean / covariance against the analytic mixture moments.
inline SampleQualityReport moment_report(const SampleMatrix& samples, const GmmSpec& target) {
  validate(target);
  if (samples.cols() != target.dim) throw ConfigError("moment_report: dimension mismatch");
  if (samples.rows() < 2) throw ConfigError("moment_report needs at least 2 samples");
  const auto [mean, cov] = detail::empirical_moments(detail::sorted_rows(samples));
  const Vec target_mean = mixture_mean(target);
  const Mat target_cov = mixture_cov(target);
  SampleQualityReport r;
  r.n = static_cast<std::size_t>(samples.rows());
  r.dim = target.dim;
  r.mean_error_l2 = (mean - target_mean).norm();
  const double scale = target_cov.norm();
  r.cov_frobenius_error = (cov - target_cov).norm() / (scale > 0.0 ? scale : 1.0);
  return r;
}

/// V-statistic energy distance 2 E|A - B| - E|A - A'| - E|B - B'|, averaging
/// over all ordered pairs including i = j. Nonnegative and exactly zero for
/// identical multisets.
inline double energy_distance(const SampleMatrix& a, const SampleMatrix& b, std::size_t threads = 1) {
  if (a.rows() < 1 || b.rows() < 1) throw ConfigError("energy_distance needs nonempty samples");
  if (a.cols() != b.cols()) throw ConfigError("energy_distance: dimension mismatch");
  const SampleMatrix sa = detail::sorted_rows(a);
  const SampleMatrix sb = detail::sorted_rows(b);
  const double ab = detail::mean_pair_distance(sa, sb, threads);
  const double ba = detail::mean_pair_distance(sb, sa, threads);
  const double aa = detail::mean_pair_distance(sa, sa, threads);
  const double bb = detail::mean_pair_distance(sb, sb, threads);
  // Grouped so that swapping a and b gives bitwise the same value.
  return std::max(0.0, (ab + ba) - (aa + bb));
}

/// KL(N(fitted mean, fitted cov) || N(target_mean, target_cov)).
inline double gaussian_kl_fit(const SampleMatrix& samples, const Vec& target_mean, const Mat& target_cov) {
  const Eigen::Index d = target_mean.size();
  if (samples.cols() != d || target_cov.rows() != d || target_cov.cols() != d) {
    throw ConfigError("gaussian_kl_fit: dimension mismatch");
  }
  if (samples.rows() <= d) throw ConfigError("gaussian_kl_fit needs more samples than dimensions");
  const Eigen::LLT<Mat> target(target_cov);
  if (target.info() != Eigen::Success) throw ConfigError("gaussian_kl_fit: target covariance not positive definite");
  const auto [mean, cov] = detail::empirical_moments(detail::sorted_rows(samples));
  const Eigen::LLT<Mat> fitted(cov);
  const Vec fitted_diag = fitted.matrixL().toDenseMatrix().diagonal();
  if (fitted.info() != Eigen::Success || !(fitted_diag.minCoeff() > 0.0)) {
    throw NumericalError("gaussian_kl_fit: fitted covariance is singular");
  }
  const double logdet_target = 2.0 * target.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet_fitted = 2.0 * fitted_diag.array().log().sum();
  const Vec diff = target_mean - mean;
  const double trace_term = target.solve(cov).trace();
  const double quad = diff.dot(target.solve(diff));
  return std::max(0.0, 0.5 * (trace_term + quad - static_cast<double>(d) + logdet_target - logdet_fitted));
}

/// Moment report plus energy distance to `reference` draws from the target
/// and, for single-Gaussian targets, the fitted-Gaussian KL.
inline SampleQualityReport sample_quality(const SampleMatrix& samples, const GmmSpec& target,
                                          const SampleMatrix& reference, std::size_t threads = 1) {
  SampleQualityReport r = moment_report(samples, target);
  r.energy_distance = energy_distance(samples, reference, threads);
  if (target.components() == 1 && samples.rows() > target.dim &&
      Eigen::LLT<Mat>(target.covs[0]).info() == Eigen::Success) {
    r.gaussian_kl = gaussian_kl_fit(samples, target.means[0], target.covs[0]);
  }
  return r;
}

}  // namespace s2n
