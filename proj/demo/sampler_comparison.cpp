// Compare several reverse-time samplers on a 2-D mixture at a few step
// counts. Every row uses the same seed, so differences come from the
// discretization alone.

#include <cstdio>

#include "s2n/s2n.hpp"

int main() {
  using namespace s2n;

  Vec m1(2), m2(2);
  m1 << -1.5, 0.5;
  m2 << 1.0, -0.5;
  Mat c1(2, 2);
  c1 << 0.3, 0.1, 0.1, 0.2;
  Mat c2 = Vec(Eigen::Vector2d(0.5, 0.4)).asDiagonal();
  const GmmSpec data = make_gmm({0.4, 0.6}, {m1, m2}, {c1, c2});
  const Schedule schedule = make_schedule(ScheduleFamily::vp);
  const std::size_t threads = resolve_threads();
  const SampleMatrix reference = sample_data(data, 2000, 7, threads);

  struct Variant {
    const char* label;
    SamplerConfig config;
  };
  std::vector<Variant> variants(5);
  variants[0].label = "deterministic";
  variants[1].label = "kingma";
  variants[1].config.kind = SamplerKind::kingma;
  variants[2].label = "generalized g=0.5";
  variants[2].config.rho = 1.0;
  variants[2].config.gamma = 0.5;
  variants[3].label = "non-markovian eta=1";
  variants[3].config.kind = SamplerKind::non_markovian;
  variants[3].config.eta = 1.0;
  variants[4].label = "euler rho=1";
  variants[4].config.kind = SamplerKind::euler_backward;
  variants[4].config.rho = 1.0;

  std::printf("%-22s %6s %12s %12s %12s\n", "sampler", "steps", "mean err", "cov err", "energy");
  for (std::size_t steps : {25u, 100u, 400u}) {
    for (Variant& v : variants) {
      v.config.steps = steps;
      v.config.seed = 7;
      const SampleMatrix x = sample(schedule, oracle_model(data, schedule), v.config, 2000, data.dim, threads).samples;
      const SampleQualityReport r = sample_quality(x, data, reference, threads);
      std::printf("%-22s %6zu %12.5f %12.5f %12.5f\n", v.label, steps, r.mean_error_l2, r.cov_frobenius_error,
                  *r.energy_distance);
    }
  }
  return 0;
}
