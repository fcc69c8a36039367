#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "s2n/schedule.hpp"

using namespace s2n;

namespace {

const ScheduleFamily kBuiltins[] = {ScheduleFamily::vp, ScheduleFamily::ve, ScheduleFamily::iddpm, ScheduleFamily::fm_ot};

oracle::Point reference(ScheduleFamily f, double t) {
  switch (f) {
    case ScheduleFamily::vp: return oracle::vp(t);
    case ScheduleFamily::ve: return oracle::ve(t);
    case ScheduleFamily::iddpm: return oracle::iddpm(t);
    default: return oracle::fm_ot(t);
  }
}

std::vector<double> grid(const Schedule& s, int n) {
  std::vector<double> ts;
  for (int i = 0; i < n; ++i) ts.push_back(s.t_min() + (s.t_max() - s.t_min()) * i / (n - 1));
  return ts;
}

}  // namespace

class BuiltinSchedule : public ::testing::TestWithParam<ScheduleFamily> {};

TEST_P(BuiltinSchedule, MatchesClosedForm) {
  const Schedule s = make_schedule(GetParam());
  for (double t : grid(s, 1000)) {
    const SchedulePoint p = s.eval(t);
    const oracle::Point q = reference(GetParam(), t);
    ASSERT_NEAR(p.alpha, q.alpha, 1e-12 * std::max(1.0, q.alpha)) << "t=" << t;
    ASSERT_NEAR(p.sigma, q.sigma, 1e-12 * std::max(1.0, q.sigma)) << "t=" << t;
    ASSERT_NEAR(p.lambda, q.lambda, 1e-10 * std::max(1.0, std::abs(q.lambda))) << "t=" << t;
  }
}

TEST_P(BuiltinSchedule, LambdaIdentityAndMonotone) {
  const Schedule s = make_schedule(GetParam());
  double prev = std::numeric_limits<double>::infinity();
  for (double t : grid(s, 1000)) {
    const SchedulePoint p = s.eval(t);
    EXPECT_GT(p.alpha, 0.0);
    EXPECT_GT(p.sigma, 0.0);
    EXPECT_NEAR(p.lambda, std::log(p.alpha * p.alpha / (p.sigma * p.sigma)), 1e-12 * std::max(1.0, std::abs(p.lambda)));
    EXPECT_LT(p.dlambda_dt, 0.0);
    EXPECT_LT(p.lambda, prev);
    prev = p.lambda;
  }
}

TEST_P(BuiltinSchedule, DerivativesMatchFiniteDifferences) {
  const Schedule s = make_schedule(GetParam());
  const double h = 1e-6;
  for (double t : grid(s, 50)) {
    if (t - h < s.t_min() || t + h > s.t_max()) continue;
    const SchedulePoint p = s.eval(t);
    const SchedulePoint a = s.eval(t + h), b = s.eval(t - h);
    const double scale = 1e-5;
    EXPECT_NEAR(p.dalpha_dt, (a.alpha - b.alpha) / (2 * h), scale * std::max(1.0, std::abs(p.dalpha_dt)));
    EXPECT_NEAR(p.dsigma_dt, (a.sigma - b.sigma) / (2 * h), scale * std::max(1.0, std::abs(p.dsigma_dt)));
    EXPECT_NEAR(p.dlambda_dt, (a.lambda - b.lambda) / (2 * h), scale * std::max(1.0, std::abs(p.dlambda_dt)));
    EXPECT_NEAR(p.dlambda_dt, 2.0 * (p.dalpha_dt / p.alpha - p.dsigma_dt / p.sigma),
                1e-10 * std::max(1.0, std::abs(p.dlambda_dt)));
  }
}

TEST_P(BuiltinSchedule, SnrIsExpLambda) {
  const Schedule s = make_schedule(GetParam());
  for (double t : grid(s, 20)) EXPECT_NEAR(s.snr(t) / std::exp(s.eval(t).lambda), 1.0, 1e-14);
}

TEST_P(BuiltinSchedule, NameRoundTrips) { EXPECT_EQ(parse_family(to_string(GetParam())), GetParam()); }

INSTANTIATE_TEST_SUITE_P(All, BuiltinSchedule, ::testing::ValuesIn(kBuiltins),
                         [](const auto& info) { return to_string(info.param); });

TEST(Schedule, FlowMatchingMidpoint) {
  const SchedulePoint p = make_schedule(ScheduleFamily::fm_ot).eval(0.5);
  EXPECT_DOUBLE_EQ(p.alpha, 0.5);
  EXPECT_DOUBLE_EQ(p.sigma, 0.5);
  EXPECT_NEAR(p.lambda, 0.0, 1e-15);
}

TEST(Schedule, VarianceExplodingEndpoints) {
  const Schedule s = make_schedule(ScheduleFamily::ve);
  EXPECT_NEAR(s.eval(0.0).lambda, 9.21034037197618273607, 1e-12);
  EXPECT_NEAR(s.snr(1.0), 4e-4, 1e-16);
  EXPECT_DOUBLE_EQ(s.eval(0.37).alpha, 1.0);
}

TEST(Schedule, VariancePreservingUnitVariance) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  for (double t : grid(s, 100)) {
    const SchedulePoint p = s.eval(t);
    EXPECT_NEAR(p.alpha * p.alpha + p.sigma * p.sigma, 1.0, 1e-14);
  }
  // d log alpha / dt at t = 1 is -(beta_min + beta_d) / 2.
  const SchedulePoint p = s.eval(1.0);
  EXPECT_NEAR(p.dalpha_dt / p.alpha, -10.0, 1e-12);
}

TEST(Schedule, RejectsWindowWhereSigmaVanishes) {
  EXPECT_THROW(make_schedule(ScheduleFamily::vp, default_params(ScheduleFamily::vp), 0.0, 1.0), ConfigError);
  EXPECT_THROW(make_schedule(ScheduleFamily::fm_ot, {}, 0.0, 0.5), ConfigError);
  EXPECT_THROW(make_schedule(ScheduleFamily::fm_ot, {}, 0.5, 1.0), ConfigError);
}

TEST(Schedule, RejectsBadConfiguration) {
  EXPECT_THROW(parse_family("cosine-ish"), ConfigError);
  EXPECT_THROW(make_schedule(ScheduleFamily::vp, {{"beta_min", 0.1}}, 1e-3, 1.0), ConfigError);
  EXPECT_THROW(make_schedule(ScheduleFamily::vp, {{"beta_min", 0.1}, {"beta_d", 19.9}, {"beta_max", 20.0}}, 1e-3, 1.0),
               ConfigError);
  EXPECT_THROW(make_schedule(ScheduleFamily::ve, {{"sigma_min", 2.0}, {"sigma_max", 1.0}}, 0.0, 1.0), ConfigError);
  EXPECT_THROW(make_schedule(ScheduleFamily::vp, default_params(ScheduleFamily::vp), 0.5, 0.5), ConfigError);
}

TEST(Schedule, EvalOutsideWindowThrows) {
  const Schedule s = make_schedule(ScheduleFamily::vp);
  EXPECT_THROW(s.eval(0.0), DomainError);
  EXPECT_THROW(s.eval(1.5), DomainError);
}

TEST(Schedule, CustomCurvesAreValidated) {
  // alpha = 1, sigma = e^{t}: lambda = -2 t, valid everywhere.
  const Schedule ok = make_custom_schedule(
      "exp", [](double t) { return std::array<double, 4>{1.0, 0.0, std::exp(t), std::exp(t)}; }, 0.0, 1.0);
  EXPECT_NEAR(ok.eval(0.25).lambda, -0.5, 1e-15);
  // Increasing lambda is rejected.
  EXPECT_THROW(make_custom_schedule(
                   "bad", [](double t) { return std::array<double, 4>{1.0, 0.0, std::exp(-t), -std::exp(-t)}; }, 0.0, 1.0),
               ConfigError);
}

TEST(Warp, ComposesWithInnerSchedule) {
  const Schedule inner = make_schedule(ScheduleFamily::vp);
  const Warp w = bend_warp(inner.t_min(), inner.t_max(), 0.4);
  const Schedule warped = make_warped_schedule(inner, w);
  EXPECT_EQ(warped.family(), ScheduleFamily::warped);
  for (double t : grid(warped, 200)) {
    const SchedulePoint p = warped.eval(t);
    const SchedulePoint q = inner.eval(w.map(t));
    EXPECT_DOUBLE_EQ(p.lambda, q.lambda);
    EXPECT_NEAR(p.dlambda_dt, q.dlambda_dt * w.derivative(t), 1e-12 * std::abs(p.dlambda_dt));
  }
  EXPECT_DOUBLE_EQ(w.map(inner.t_min()), inner.t_min());
  EXPECT_DOUBLE_EQ(w.map(inner.t_max()), inner.t_max());
}

TEST(Warp, BendOutOfRangeRejected) {
  EXPECT_THROW(bend_warp(0.0, 1.0, 1.0), ConfigError);
  EXPECT_THROW(bend_warp(0.0, 1.0, -1.5), ConfigError);
}
