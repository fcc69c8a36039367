#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "s2n/gmm.hpp"

using namespace s2n;

namespace {

Mat eye(int d) { return Mat::Identity(d, d); }

GmmSpec two_blobs() {
  Vec m1(2), m2(2);
  m1 << -2.0, 0.5;
  m2 << 1.5, -1.0;
  Mat c1(2, 2), c2(2, 2);
  c1 << 0.5, 0.2, 0.2, 0.3;
  c2 << 0.2, 0.0, 0.0, 0.8;
  return make_gmm({0.3, 0.7}, {m1, m2}, {c1, c2});
}

}  // namespace

TEST(Gmm, ValidationRejectsBadInput) {
  EXPECT_THROW(make_gmm({0.5, 0.6}, {Vec::Zero(1), Vec::Zero(1)}, {eye(1), eye(1)}), ConfigError);
  EXPECT_THROW(make_gmm({1.0}, {Vec::Zero(2)}, {eye(3)}), ConfigError);
  Mat asym(2, 2);
  asym << 1, 0.5, 0.0, 1;
  EXPECT_THROW(make_gmm({1.0}, {Vec::Zero(2)}, {asym}), ConfigError);
  Mat neg(2, 2);
  neg << 1, 2, 2, 1;
  EXPECT_THROW(make_gmm({1.0}, {Vec::Zero(2)}, {neg}), ConfigError);
  EXPECT_THROW(make_gmm({-0.5, 1.5}, {Vec::Zero(1), Vec::Zero(1)}, {eye(1), eye(1)}), ConfigError);
}

TEST(Gmm, MixtureMomentsByHand) {
  const GmmSpec g = two_blobs();
  Vec mean(2);
  mean << 0.3 * -2.0 + 0.7 * 1.5, 0.3 * 0.5 + 0.7 * -1.0;
  EXPECT_NEAR((mixture_mean(g) - mean).norm(), 0.0, 1e-15);
  const double d0 = -2.0 - mean(0), d1 = 1.5 - mean(0);
  const double var0 = 0.3 * (0.5 + d0 * d0) + 0.7 * (0.2 + d1 * d1);
  EXPECT_NEAR(mixture_cov(g)(0, 0), var0, 1e-14);
}

TEST(Gmm, GaussianSampleMeanWithinClt) {
  const GmmSpec g = make_gaussian(Vec::Zero(3), eye(3));
  const std::size_t n = 20000;
  const SampleMatrix x = sample_data(g, n, 17);
  const Vec m = x.colwise().mean().transpose();
  for (int j = 0; j < 3; ++j) EXPECT_LT(std::abs(m(j)), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Gmm, TwoComponentSampleMean) {
  const GmmSpec g = two_blobs();
  const SampleMatrix x = sample_data(g, 50000, 3);
  const Vec m = x.colwise().mean().transpose();
  EXPECT_LT((m - mixture_mean(g)).cwiseAbs().maxCoeff(), 0.02);
}

TEST(Gmm, DegenerateCovarianceIsAllowed) {
  Vec mu(2);
  mu << 1.0, -1.0;
  const GmmSpec g = make_gaussian(mu, Mat::Zero(2, 2));
  const SampleMatrix x = sample_data(g, 10, 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) EXPECT_EQ(Vec(x.row(i).transpose()), mu);
  // Noisy version stays well defined.
  const NoisyMixture noisy(g, 0.5, 0.5);
  Vec z(2);
  z << 0.1, 0.2;
  EXPECT_TRUE(noisy.score(z).allFinite());
  EXPECT_NEAR((noisy.posterior_mean(z) - mu).norm(), 0.0, 1e-14);
}

TEST(Gmm, SamplingDeterministicAndThreadIndependent) {
  const GmmSpec g = two_blobs();
  const SampleMatrix a = sample_data(g, 500, 9, 1);
  const SampleMatrix b = sample_data(g, 500, 9, 4);
  EXPECT_TRUE((a.array() == b.array()).all());
  const SampleMatrix c = sample_data(g, 500, 10, 1);
  EXPECT_FALSE((a.array() == c.array()).all());
}

TEST(Gmm, MarginalOfStandardNormal) {
  const GmmSpec g = make_gaussian(Vec::Zero(1), eye(1));
  const double h = std::sqrt(0.5);
  const GmmSpec m = marginal_at(g, h, h);
  EXPECT_NEAR(m.covs[0](0, 0), 1.0, 1e-15);
  const GmmSpec m2 = marginal_at(g, 0.5, 0.5);
  EXPECT_NEAR(m2.covs[0](0, 0), 0.5, 1e-15);
  EXPECT_NEAR(m2.means[0](0), 0.0, 1e-15);
}

TEST(Gmm, MarginalsCompose) {
  // Noising twice equals noising once with combined coefficients.
  const GmmSpec g = two_blobs();
  const double a1 = 0.8, s1 = 0.3, a2 = 0.6, s2 = 0.4;
  const GmmSpec twice = marginal_at(marginal_at(g, a1, s1), a2, s2);
  const GmmSpec once = marginal_at(g, a1 * a2, std::sqrt(a2 * a2 * s1 * s1 + s2 * s2));
  for (std::size_t i = 0; i < g.components(); ++i) {
    EXPECT_NEAR((twice.means[i] - once.means[i]).norm(), 0.0, 1e-14);
    EXPECT_NEAR((twice.covs[i] - once.covs[i]).norm(), 0.0, 1e-14);
  }
}

TEST(Gmm, GaussianScoreClosedForm) {
  const GmmSpec g = make_gaussian(Vec::Zero(2), eye(2));
  const double a = 0.7, s = 0.4;
  const NoisyMixture noisy(g, a, s);
  Vec z(2);
  z << 0.3, -1.2;
  EXPECT_NEAR((noisy.score(z) + z / (a * a + s * s)).norm(), 0.0, 1e-14);
}

TEST(Gmm, SymmetricMixtureScoreVanishesAtOrigin) {
  Vec m(1);
  m << 2.0;
  const GmmSpec g = make_gmm({0.5, 0.5}, {m, Vec(-m)}, {eye(1), eye(1)});
  const NoisyMixture noisy(g, 0.9, 0.5);
  EXPECT_NEAR(noisy.score(Vec::Zero(1)).norm(), 0.0, 1e-15);
}

TEST(Gmm, ScoreIsGradientOfLogDensity) {
  const GmmSpec g = two_blobs();
  const NoisyMixture noisy(g, 0.6, 0.5);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    Vec z(2);
    z << NoiseStream(1, Stream::monte_carlo, trial).normal(0), NoiseStream(1, Stream::monte_carlo, trial).normal(1);
    const Vec s = noisy.score(z);
    for (int j = 0; j < 2; ++j) {
      Vec zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      const double fd = (noisy.log_density(zp) - noisy.log_density(zm)) / (2 * h);
      EXPECT_NEAR(s(j), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Gmm, PosteriorMeanMatchesOneDimensionalFormula) {
  Vec mu(1);
  mu << 0.7;
  Mat S(1, 1);
  S << 2.5;
  const GmmSpec g = make_gaussian(mu, S);
  for (double a : {0.1, 0.5, 1.0}) {
    for (double s : {0.05, 0.5, 3.0}) {
      const NoisyMixture noisy(g, a, s);
      for (double z : {-2.0, 0.0, 1.3}) {
        Vec zz(1);
        zz << z;
        EXPECT_NEAR(noisy.posterior_mean(zz)(0), oracle::posterior_mean_1d(0.7, 2.5, a, s, z), 1e-12);
      }
    }
  }
}

TEST(Gmm, TweedieIdentity) {
  // E[x | z] = (z + sigma^2 score(z)) / alpha.
  const GmmSpec g = two_blobs();
  for (double a : {0.2, 0.9}) {
    const double s = std::sqrt(1 - a * a);
    const NoisyMixture noisy(g, a, s);
    for (int trial = 0; trial < 20; ++trial) {
      Vec z(2);
      const NoiseStream rs(2, Stream::monte_carlo, trial);
      z << 2 * rs.normal(0), 2 * rs.normal(1);
      const Vec tweedie = (z + s * s * noisy.score(z)) / a;
      EXPECT_NEAR((noisy.posterior_mean(z) - tweedie).norm(), 0.0, 1e-10 * std::max(1.0, tweedie.norm()));
    }
  }
}

TEST(Gmm, LogDensityOfStandardNormal) {
  const GmmSpec g = make_gaussian(Vec::Zero(1), eye(1));
  const NoisyMixture noisy(g, 0.6, 0.8);
  Vec z(1);
  z << 0.0;
  EXPECT_NEAR(noisy.log_density(z), -0.5 * std::log(2 * std::numbers::pi), 1e-14);
}

TEST(Gmm, PickComponentInverseCdf) {
  const GmmSpec g = two_blobs();
  EXPECT_EQ(pick_component(g, 0.0), 0u);
  EXPECT_EQ(pick_component(g, 0.2999), 0u);
  EXPECT_EQ(pick_component(g, 0.3001), 1u);
  EXPECT_EQ(pick_component(g, 0.9999999), 1u);
}
