// Draw samples from a two-component mixture with the exact oracle score and
// print how close they land to the data distribution.

#include <iostream>

#include "s2n/s2n.hpp"

int main() {
  using namespace s2n;

  Vec left(1), right(1);
  left << -1.0;
  right << 1.5;
  Mat narrow = Mat::Constant(1, 1, 0.2);
  Mat wide = Mat::Constant(1, 1, 0.4);
  const GmmSpec data = make_gmm({0.3, 0.7}, {left, right}, {narrow, wide});

  const Schedule schedule = make_schedule(ScheduleFamily::vp);
  const ScoreModel model = oracle_model(data, schedule, Prediction::noise);

  SamplerConfig config;
  config.kind = SamplerKind::kingma;
  config.steps = 200;
  config.seed = 42;

  const std::size_t threads = resolve_threads();
  const SampleMatrix x = sample(schedule, model, config, 5000, data.dim, threads).samples;
  const SampleMatrix reference = sample_data(data, 5000, 42, threads);
  const SampleQualityReport r = sample_quality(x, data, reference, threads);

  std::cout << "target mean " << mixture_mean(data)(0) << ", variance " << mixture_cov(data)(0, 0) << "\n"
            << "mean error " << r.mean_error_l2 << "\n"
            << "relative covariance error " << r.cov_frobenius_error << "\n"
            << "energy distance to fresh data draws " << *r.energy_distance << "\n";
  return 0;
}
