#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "s2n/samplers.hpp"

using namespace s2n;

namespace {

const ScheduleFamily kBuiltins[] = {ScheduleFamily::vp, ScheduleFamily::ve, ScheduleFamily::iddpm, ScheduleFamily::fm_ot};

GmmSpec blobs() {
  Vec m1(2), m2(2);
  m1 << -1.0, 0.5;
  m2 << 1.2, -0.4;
  Mat c1 = 0.4 * Mat::Identity(2, 2);
  Mat c2(2, 2);
  c2 << 0.3, 0.1, 0.1, 0.6;
  return make_gmm({0.5, 0.5}, {m1, m2}, {c1, c2});
}

GmmSpec gaussian_1d(double mu, double var) {
  Vec m(1);
  m << mu;
  Mat c(1, 1);
  c << var;
  return make_gaussian(m, c);
}

Vec draw(std::uint64_t idx, int dim, double scale = 1.0) {
  Vec v(dim);
  NoiseStream(77, Stream::monte_carlo, idx).normals(0, std::span<double>(v.data(), static_cast<std::size_t>(dim)));
  return scale * v;
}

/// Random (t, s) pair inside the window with s < t.
std::pair<double, double> random_pair(const Schedule& s, std::uint64_t idx) {
  const NoiseStream r(5, Stream::monte_carlo, idx);
  const double u = r.uniform(0), v = r.uniform(1);
  const double a = s.t_min() + (s.t_max() - s.t_min()) * std::max(u, v);
  const double b = s.t_min() + (s.t_max() - s.t_min()) * std::min(u, v);
  return {a, b == a ? s.t_min() : b};
}

template <class A, class B>
std::vector<double> gaps(A&& a, B&& b, double t, double h0, int levels) {
  std::vector<double> out;
  for (int k = 0; k < levels; ++k, h0 *= 0.5) out.push_back((a(t, t - h0) - b(t, t - h0)).norm());
  return out;
}

oracle::Point as_point(const SchedulePoint& p) { return {p.alpha, p.sigma, p.lambda}; }

}  // namespace

TEST(Steppers, SameTimeReturnsInput) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  const Vec z = draw(0, 2), eps = draw(1, 2);
  EXPECT_EQ(step_generalized(s, m, z, 0.5, 0.5, 1.0, 0.3, 0.7, eps), z);
  EXPECT_EQ(step_kingma(s, m, z, 0.5, 0.5, eps), z);
  EXPECT_EQ(step_non_markovian(s, m, z, 0.5, 0.5, 1.0, eps), z);
  EXPECT_EQ(step_euler_backward(s, m, z, 0.5, 0.5, 1.0, eps), z);
}

TEST(Steppers, ReversedTimesThrow) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  const Vec z = draw(0, 2), eps = draw(1, 2);
  EXPECT_THROW(step_generalized(s, m, z, 0.4, 0.5, 0.0, 0.0, 1.0, eps), DomainError);
  EXPECT_THROW(step_kingma(s, m, z, 0.4, 0.5, eps), DomainError);
  EXPECT_THROW(step_non_markovian(s, m, z, 0.4, 0.5, 0.0, eps), DomainError);
  EXPECT_THROW(step_euler_backward(s, m, z, 0.4, 0.5, 0.0, eps), DomainError);
}

TEST(Steppers, GammaMinusOneRejected) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  EXPECT_THROW(step_generalized(s, m, draw(0, 2), 0.5, 0.4, 0.0, -1.0, 1.0, Vec()), ConfigError);
  SamplerConfig c;
  c.gamma = -1.0;
  EXPECT_THROW(validate(c, s), ConfigError);
}

TEST(Steppers, StochasticStepWithoutNoiseThrows) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  EXPECT_THROW(step_generalized(s, m, draw(0, 2), 0.5, 0.4, 1.0, 0.0, 1.0, Vec()), ConfigError);
  EXPECT_THROW(step_kingma(s, m, draw(0, 2), 0.5, 0.4, Vec()), ConfigError);
}

TEST(Steppers, KingmaIsGeneralizedSpecialCase) {
  const GmmSpec g = blobs();
  for (ScheduleFamily f : kBuiltins) {
    const Schedule s = make_schedule(f);
    const ScoreModel m = oracle_model(g, s);
    for (std::uint64_t i = 0; i < 100; ++i) {
      const auto [t, u] = random_pair(s, i);
      const Vec z = draw(2 * i, 2, 1.0 + s.eval(t).sigma), eps = draw(2 * i + 1, 2);
      const Vec a = step_generalized(s, m, z, t, u, 1.0, 1.0, 1.0, eps);
      const Vec b = step_kingma(s, m, z, t, u, eps);
      ASSERT_NEAR((a - b).norm(), 0.0, 1e-12 * std::max(1.0, b.norm())) << to_string(f) << " t=" << t << " s=" << u;
    }
  }
}

TEST(Steppers, KingmaMatchesDdpmPosterior) {
  // z_s = E[z_s | z_t, x_hat] + std eps, with x_hat recovered from eps_hat.
  const GmmSpec g = gaussian_1d(0.4, 1.7);
  const Schedule s = make_schedule(ScheduleFamily::iddpm);
  const ScoreModel m = oracle_model(g, s, Prediction::noise);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto [t, u] = random_pair(s, i);
    const Vec z = draw(i, 1, 1.5), eps = draw(i + 1000, 1);
    const oracle::Point pt = as_point(s.eval(t)), ps = as_point(s.eval(u));
    const double eps_hat = m(z, t)(0);
    const double x_hat = (z(0) - pt.sigma * eps_hat) / pt.alpha;
    const oracle::Posterior post = oracle::ddpm_posterior(pt, ps);
    const double expected = post.mean_coeff_z * z(0) + post.mean_coeff_x * x_hat + post.std * eps(0);
    EXPECT_NEAR(step_kingma(s, m, z, t, u, eps)(0), expected, 1e-10 * std::max(1.0, std::abs(expected)));
  }
}

TEST(Steppers, DeterministicCaseMatchesExponentialIntegrator) {
  const GmmSpec g = gaussian_1d(-0.3, 0.5);
  for (ScheduleFamily f : kBuiltins) {
    const Schedule s = make_schedule(f);
    const ScoreModel m = oracle_model(g, s);
    for (std::uint64_t i = 0; i < 30; ++i) {
      const auto [t, u] = random_pair(s, i);
      const Vec z = draw(i, 1, s.eval(t).sigma + 1.0);
      const double eps_hat = predict(m, Prediction::noise, s, z, t)(0);
      const double expected = oracle::ddim_1d(as_point(s.eval(t)), as_point(s.eval(u)), z(0), eps_hat);
      EXPECT_NEAR(step_generalized(s, m, z, t, u, 0.0, 0.0, 1.0, Vec())(0), expected,
                  1e-10 * std::max(1.0, std::abs(expected)));
      EXPECT_NEAR(step_non_markovian(s, m, z, t, u, 0.0, Vec())(0), expected, 1e-10 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST(Steppers, ZeroRhoIgnoresNoise) {
  const Schedule s = make_schedule(ScheduleFamily::fm_ot);
  const ScoreModel m = oracle_model(blobs(), s);
  const Vec z = draw(3, 2);
  for (double gamma : {-0.5, 0.0, 1.5}) {
    const Vec a = step_generalized(s, m, z, 0.7, 0.4, 0.0, gamma, 0.8, Vec());
    const Vec b = step_generalized(s, m, z, 0.7, 0.4, 0.0, gamma, 0.8, draw(4, 2, 100.0));
    EXPECT_EQ(a, b);
  }
  EXPECT_EQ(generalized_coefficients(s, 0.7, 0.4, 0.0, 0.5, 1.0).noise, 0.0);
}

TEST(Steppers, KingmaNoiseVanishesAsStepShrinks) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  double prev = std::numeric_limits<double>::infinity();
  for (double h : {1e-1, 1e-2, 1e-3, 1e-4, 1e-6}) {
    const double c = generalized_coefficients(s, 0.5, 0.5 - h, 1.0, 1.0, 1.0).noise;
    EXPECT_LT(c, prev);
    prev = c;
  }
  EXPECT_LT(prev, 1e-2);
}

TEST(Steppers, KingmaApproachesEulerAtSecondOrder) {
  // Compare the drift parts (zero noise draw); the ratio over halvings is ~4.
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(gaussian_1d(0.3, 0.8), s);
  Vec z(1), zero = Vec::Zero(1);
  z << 0.7;
  const auto d = gaps([&](double t, double u) { return step_kingma(s, m, z, t, u, zero); },
                      [&](double t, double u) { return step_euler_backward(s, m, z, t, u, 1.0, zero); }, 0.5, 0.02, 5);
  for (std::size_t k = 1; k < d.size(); ++k) {
    const double r = d[k - 1] / d[k];
    EXPECT_GE(r, 3.0) << k;
    EXPECT_LE(r, 5.0) << k;
  }
}

TEST(Steppers, DeterministicApproachesEulerAtSecondOrder) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(gaussian_1d(0.3, 0.8), s);
  Vec z(1);
  z << 0.7;
  const auto d = gaps([&](double t, double u) { return step_generalized(s, m, z, t, u, 0.0, 0.0, 1.0, Vec()); },
                      [&](double t, double u) { return step_euler_backward(s, m, z, t, u, 0.0, Vec()); }, 0.5, 0.02, 5);
  for (std::size_t k = 1; k < d.size(); ++k) {
    const double r = d[k - 1] / d[k];
    EXPECT_GE(r, 3.0) << k;
    EXPECT_LE(r, 5.0) << k;
  }
}

TEST(Steppers, EulerWithZeroScoreScalesByDrift) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  ScoreModel zero;
  zero.tag = Prediction::score;
  zero.fn = [](const Vec& z, double) { return Vec(Vec::Zero(z.size())); };
  const Vec z = draw(9, 3);
  const double f = forward_coeffs(s, 0.6).f;
  EXPECT_NEAR((step_euler_backward(s, zero, z, 0.6, 0.55, 0.0, Vec()) - z * (1.0 + f * (0.55 - 0.6))).norm(), 0.0,
              1e-15);
}

TEST(Steppers, EulerNoiseVarianceIsDiffusionTimesStep) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  const Vec z = draw(1, 2), eps = draw(2, 2);
  const Vec with = step_euler_backward(s, m, z, 0.6, 0.5, 1.0, eps);
  const Vec without = step_euler_backward(s, m, z, 0.6, 0.5, 1.0, Vec::Zero(2));
  const double g = forward_coeffs(s, 0.6).g;
  EXPECT_NEAR(((with - without) - g * std::sqrt(0.1) * eps).norm(), 0.0, 1e-13);
}

TEST(NonMarkovian, BetaIsClampedBelowTargetVariance) {
  const Schedule s = make_schedule(ScheduleFamily::ve);
  for (double eta : {0.0, 0.3, 1.0}) {
    for (std::uint64_t i = 0; i < 20; ++i) {
      const auto [t, u] = random_pair(s, i);
      const double b2 = non_markovian_beta2(s, t, u, eta);
      const double ss = s.eval(u).sigma;
      EXPECT_GE(b2, 0.0);
      EXPECT_LT(b2, ss * ss);
    }
  }
  EXPECT_EQ(non_markovian_beta2(s, 0.5, 0.3, 0.0), 0.0);
}

TEST(NonMarkovian, ExactGivenTheTrueDataPoint) {
  // With x_hat = x, z_t ~ N(alpha_t x, sigma_t^2) maps to N(alpha_s x, sigma_s^2).
  for (ScheduleFamily f : kBuiltins) {
    const Schedule s = make_schedule(f);
    const double x = 0.9;
    ScoreModel truth;
    truth.tag = Prediction::data;
    truth.fn = [x](const Vec& z, double) { return Vec(Vec::Constant(z.size(), x)); };
    for (double eta : {0.0, 0.5, 1.0}) {
      const auto [t, u] = random_pair(s, 11);
      const SchedulePoint pt = s.eval(t), ps = s.eval(u);
      const Vec zero = Vec::Zero(1), one = Vec::Ones(1);
      const double b = step_non_markovian(s, truth, zero, t, u, eta, zero)(0);
      const double a = step_non_markovian(s, truth, one, t, u, eta, zero)(0) - b;
      const double beta = step_non_markovian(s, truth, zero, t, u, eta, one)(0) - b;
      const double mean = a * pt.alpha * x + b;
      const double var = a * a * pt.sigma * pt.sigma + beta * beta;
      EXPECT_NEAR(mean, ps.alpha * x, 1e-10 * std::max(1.0, ps.alpha));
      EXPECT_NEAR(var, ps.sigma * ps.sigma, 1e-9 * std::max(1.0, ps.sigma * ps.sigma)) << to_string(f) << " eta=" << eta;
    }
  }
}

TEST(ExactReference, SingleSubstepIsOneStep) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  const Vec z = draw(1, 2);
  const NoiseStream stream(3, Stream::step, 0);
  Vec eps(2);
  stream.normals(4, std::span<double>(eps.data(), 2), 0);
  const Vec a = exact_reference(s, m, z, 0.6, 0.3, 0.7, 0.2, 0.9, 1, stream, 4);
  const Vec b = step_generalized(s, m, z, 0.6, 0.3, 0.7, 0.2, 0.9, eps);
  EXPECT_EQ(a, b);
}

TEST(ExactReference, DeterministicConvergesMonotonically) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  const Vec z = draw(2, 2);
  const NoiseStream stream(0, Stream::step, 0);
  const Vec ref = exact_reference(s, m, z, 0.8, 0.2, 0.0, 0.0, 1.0, 64, stream, 0);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t sub : {1u, 2u, 4u, 8u, 16u}) {
    const double err = (exact_reference(s, m, z, 0.8, 0.2, 0.0, 0.0, 1.0, sub, stream, 0) - ref).norm();
    EXPECT_LT(err, prev) << sub;
    prev = err;
  }
}

TEST(ExactReference, SolvesLinearOdeOverOneGridStep) {
  const double mu = 0.5, var = 2.0;
  const GmmSpec g = gaussian_1d(mu, var);
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(g, s);
  const std::vector<double> grid = make_time_grid(s, GridKind::uniform_lambda, 200, s.t_max(), s.t_min());
  const NoiseStream stream(0, Stream::step, 0);
  for (std::size_t k : {0u, 50u, 100u, 199u}) {
    const double t = grid[k], u = grid[k + 1];
    Vec z(1);
    z << 1.3;
    const double got = exact_reference(s, m, z, t, u, 0.0, 0.0, 1.0, 1000, stream, 0)(0);
    const double want = oracle::flow_map_1d(mu, var, as_point(s.eval(t)), as_point(s.eval(u)), 1.3);
    EXPECT_NEAR(got, want, 1e-6 * std::abs(want)) << "step " << k;
  }
}

TEST(TimeGrid, SingleStepIsEndpoints) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const auto grid = make_time_grid(s, GridKind::uniform_lambda, 1, 0.9, 0.1);
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_EQ(grid[0], 0.9);
  EXPECT_EQ(grid[1], 0.1);
}

TEST(TimeGrid, FlowMatchingSymmetric) {
  const Schedule s = make_schedule(ScheduleFamily::fm_ot);
  const auto grid = make_time_grid(s, GridKind::uniform_lambda, 20, s.t_max(), s.t_min());
  for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_NEAR(grid[k] + grid[grid.size() - 1 - k], 1.0, 1e-12);
}

TEST(TimeGrid, StrictlyDecreasingWithExactEnds) {
  for (ScheduleFamily f : kBuiltins) {
    const Schedule s = make_schedule(f);
    for (GridKind kind : {GridKind::uniform_t, GridKind::uniform_lambda}) {
      const auto grid = make_time_grid(s, kind, 137, s.t_max(), s.t_min());
      EXPECT_EQ(grid.front(), s.t_max());
      EXPECT_EQ(grid.back(), s.t_min());
      for (std::size_t k = 0; k + 1 < grid.size(); ++k) EXPECT_GT(grid[k] - grid[k + 1], 0.0);
    }
  }
}

TEST(TimeGrid, UniformLambdaHasEqualLogSnrGaps) {
  const Schedule s = make_schedule(ScheduleFamily::iddpm);
  const auto grid = make_time_grid(s, GridKind::uniform_lambda, 40, s.t_max(), s.t_min());
  const double gap = (s.eval(grid.back()).lambda - s.eval(grid.front()).lambda) / 40.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    EXPECT_NEAR(s.eval(grid[k + 1]).lambda - s.eval(grid[k]).lambda, gap, 1e-9);
  }
}

TEST(TimeGrid, RejectsEmptyInterval) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  EXPECT_THROW(make_time_grid(s, GridKind::uniform_t, 10, 0.5, 0.5), ConfigError);
  EXPECT_THROW(make_time_grid(s, GridKind::uniform_t, 10, 0.3, 0.5), ConfigError);
  EXPECT_THROW(make_time_grid(s, GridKind::uniform_t, 0, 0.5, 0.3), ConfigError);
}

TEST(SamplerNames, RoundTrip) {
  for (SamplerKind k : {SamplerKind::generalized, SamplerKind::kingma, SamplerKind::non_markovian,
                        SamplerKind::euler_backward, SamplerKind::exact_reference}) {
    EXPECT_EQ(parse_sampler_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_grid_kind("uniform_t"), GridKind::uniform_t);
  EXPECT_THROW(parse_sampler_kind("heun"), ConfigError);
}

TEST(Sample, EqualStartAndEndReturnsPrior) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  SamplerConfig c;
  c.t_start = 0.7;
  c.t_end = 0.7;
  c.seed = 4;
  const SampleResult r = sample(s, m, c, 10, 2);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(Vec(r.samples.row(static_cast<Eigen::Index>(i)).transpose()), prior_draw(s, 0.7, 4, i, 2));
  }
}

TEST(Sample, IndependentOfThreadCount) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  for (SamplerKind kind : {SamplerKind::generalized, SamplerKind::kingma, SamplerKind::non_markovian,
                           SamplerKind::euler_backward, SamplerKind::exact_reference}) {
    SamplerConfig c;
    c.kind = kind;
    c.rho = 0.7;
    c.eta = 0.5;
    c.steps = 20;
    c.substeps = 4;
    c.seed = 123;
    const SampleResult a = sample(s, m, c, 64, 2, 1);
    const SampleResult b = sample(s, m, c, 64, 2, 4);
    EXPECT_TRUE((a.samples.array() == b.samples.array()).all()) << to_string(kind);
  }
}

TEST(Sample, RecordsTrajectories) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  SamplerConfig c;
  c.kind = SamplerKind::kingma;
  c.steps = 15;
  const SampleResult r = sample(s, m, c, 8, 2, 2, 3);
  ASSERT_EQ(r.trajectories.size(), 3u);
  for (const Trajectory& tr : r.trajectories) {
    EXPECT_EQ(tr.times.size(), 16u);
    EXPECT_EQ(tr.states.size(), tr.times.size());
    EXPECT_EQ(tr.noises.size(), 15u);
    EXPECT_EQ(tr.states.back(), Vec(r.samples.row(static_cast<Eigen::Index>(tr.sample_id)).transpose()));
    for (std::size_t k = 0; k + 1 < tr.times.size(); ++k) EXPECT_GT(tr.times[k], tr.times[k + 1]);
  }
}

TEST(Sample, NonFiniteStateRaises) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  ScoreModel bad;
  bad.tag = Prediction::noise;
  bad.fn = [](const Vec& z, double t) { return t < 0.5 ? Vec(Vec::Constant(z.size(), std::nan(""))) : Vec(z); };
  SamplerConfig c;
  c.steps = 10;
  EXPECT_THROW(sample(s, bad, c, 4, 1), NumericalError);
}

TEST(Sample, ContinuousInGamma) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(blobs(), s);
  const Vec z = draw(1, 2), eps = draw(2, 2);
  const double h = 1e-7;
  for (double gamma = -0.9; gamma <= 2.0 + 1e-12; gamma += 0.1) {
    const Vec a = step_generalized(s, m, z, 0.6, 0.45, 0.8, gamma, 0.9, eps);
    const Vec b = step_generalized(s, m, z, 0.6, 0.45, 0.8, gamma + h, 0.9, eps);
    EXPECT_LT((a - b).norm(), 1e-5) << "gamma=" << gamma;
  }
}

TEST(Sample, DeterministicVarianceApproachesDataVariance) {
  // Exact propagation of the linear DDIM map on N(0, 1) data: error shrinks with steps.
  const Schedule s = make_schedule(ScheduleFamily::vp);
  const ScoreModel m = oracle_model(gaussian_1d(0.0, 1.0), s);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t steps : {25u, 50u, 100u, 200u, 400u}) {
    SamplerConfig c;
    c.steps = steps;
    c.t_start = s.t_max();
    const auto grid = make_time_grid(s, GridKind::uniform_lambda, steps, s.t_max(), s.t_min());
    Vec z = Vec::Ones(1);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) z = step_generalized(s, m, z, grid[k], grid[k + 1], 0, 0, 1, Vec());
    const double var = z(0) * z(0) * std::pow(s.eval(s.t_max()).sigma, 2);
    const double err = std::abs(var - 1.0);
    EXPECT_LT(err, prev) << steps;
    prev = err;
  }
}
