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

// Implementation of the s2ndiff subcommands. Each command reads an optional
// JSON run config, applies flag overrides (flags win), writes its files under
// the output directory and returns a process exit code:
//   0 success, 1 verification failure, 2 configuration error, 3 numerical failure.

#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "s2n/dynamics.hpp"
#include "s2n/error.hpp"
#include "s2n/gmm.hpp"
#include "s2n/infotheory.hpp"
#include "s2n/io.hpp"
#include "s2n/metrics.hpp"
#include "s2n/parallel.hpp"
#include "s2n/samplers.hpp"
#include "s2n/schedule.hpp"
#include "s2n/snr_space.hpp"
#include "s2n/verify.hpp"

namespace s2n {

enum ExitCode : int { kExitOk = 0, kExitVerifyFailed = 1, kExitConfig = 2, kExitNumerical = 3 };

struct CommonOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

/// Everything a run can be configured with. Built from the config file and
/// then overridden by flags.
struct RunConfig {
  std::optional<Schedule> schedule;
  std::optional<GmmSpec> gmm;
  SamplerConfig sampler;
  bool sampler_given = false;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = ".";
  std::size_t threads = 1;
  Json extra = Json::object();  // command-specific sections ("n", "sweep", "info", ...)
};

inline RunConfig load_run_config(const CommonOptions& common) {
  RunConfig rc;
  if (common.config) {
    const Json j = read_json_file(*common.config);
    detail::require_object(j, "run config");
    detail::reject_unknown_keys(j,
                                {"schedule", "gmm", "sampler", "seed", "out", "n", "reference_n", "record_trajectories",
                                 "grid_size", "sweep", "info", "snrspace"},
                                "run config");
    if (j.contains("schedule")) rc.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("gmm")) rc.gmm = gmm_from_json(j.at("gmm"));
    if (j.contains("sampler")) {
      rc.sampler = sampler_config_from_json(j.at("sampler"));
      rc.sampler_given = true;
      if (j.at("sampler").contains("seed")) rc.seed = rc.sampler.seed;
    }
    if (j.contains("seed")) rc.seed = detail::get_uint(j, "seed", "run config");
    if (j.contains("out")) rc.out = j.at("out").get<std::string>();
    rc.extra = j;
  }
  if (common.seed) rc.seed = *common.seed;
  if (common.out) rc.out = *common.out;
  rc.threads = resolve_threads(common.threads);
  if (rc.seed) rc.sampler.seed = *rc.seed;
  return rc;
}

namespace detail {

inline std::uint64_t require_seed(const RunConfig& rc, const std::string& command) {
  if (!rc.seed) throw ConfigError(command + " is stochastic and needs a seed (--seed or \"seed\" in the config)");
  return *rc.seed;
}

inline const Schedule& require_schedule(const RunConfig& rc) {
  if (!rc.schedule) throw ConfigError("no schedule configured");
  return *rc.schedule;
}

inline const GmmSpec& require_gmm(const RunConfig& rc) {
  if (!rc.gmm) throw ConfigError("no gmm configured");
  return *rc.gmm;
}

template <typename T>
T extra_or(const RunConfig& rc, const std::string& key, T fallback) {
  if (!rc.extra.contains(key)) return fallback;
  try {
    return rc.extra.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

inline const Json& extra_section(const RunConfig& rc, const std::string& key) {
  static const Json empty = Json::object();
  if (!rc.extra.contains(key)) return empty;
  const Json& j = rc.extra.at(key);
  require_object(j, key);
  return j;
}

template <typename T>
T section_or(const Json& section, const std::string& key, T fallback) {
  if (!section.contains(key)) return fallback;
  try {
    return section.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// schedules

struct SchedulesOptions {
  std::optional<std::string> schedule;  // family name with default params
  std::optional<std::size_t> grid_size;
};

inline int cmd_schedules(const CommonOptions& common, const SchedulesOptions& opt, std::ostream& log) {
  RunConfig rc = load_run_config(common);
  if (opt.schedule) rc.schedule = make_schedule(parse_family(*opt.schedule));
  if (!rc.schedule) rc.schedule = make_schedule(ScheduleFamily::vp);
  const std::size_t grid = opt.grid_size.value_or(detail::extra_or<std::size_t>(rc, "grid_size", 100));
  const auto path = rc.out / "schedule.csv";
  write_text_file(path, schedule_csv(*rc.schedule, grid));
  log << "wrote " << path.string() << " (" << grid << " rows, " << rc.schedule->name() << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sample

struct SampleOverrides {
  std::optional<std::size_t> n;
  std::optional<std::string> kind;
  std::optional<double> rho, gamma, delta, eta;
  std::optional<std::size_t> steps;
  std::optional<std::string> grid;
  std::optional<double> t_start, t_end;
  std::optional<std::size_t> record;
};

inline void apply_overrides(SamplerConfig& c, const SampleOverrides& o) {
  if (o.kind) c.kind = parse_sampler_kind(*o.kind);
  if (o.rho) c.rho = *o.rho;
  if (o.gamma) c.gamma = *o.gamma;
  if (o.delta) c.delta = *o.delta;
  if (o.eta) c.eta = *o.eta;
  if (o.steps) c.steps = *o.steps;
  if (o.grid) c.grid = parse_grid_kind(*o.grid);
  if (o.t_start) c.t_start = *o.t_start;
  if (o.t_end) c.t_end = *o.t_end;
}

struct SampleRun {
  SampleResult result;
  SampleQualityReport report;
};

/// Samples with the exact oracle score of the configured data and scores the
/// result against `reference` draws from the data.
inline SampleRun run_sampler(const Schedule& schedule, const GmmSpec& gmm, const SamplerConfig& config, std::size_t n,
                             const SampleMatrix& reference, std::size_t threads, std::size_t record = 0) {
  const ScoreModel model = oracle_model(gmm, schedule, Prediction::noise);
  SampleRun run;
  run.result = sample(schedule, model, config, n, gmm.dim, threads, record);
  run.report = sample_quality(run.result.samples, gmm, reference, threads);
  return run;
}

inline int cmd_sample(const CommonOptions& common, const SampleOverrides& ov, std::ostream& log) {
  RunConfig rc = load_run_config(common);
  apply_overrides(rc.sampler, ov);
  const std::uint64_t seed = detail::require_seed(rc, "sample");
  const Schedule& schedule = detail::require_schedule(rc);
  const GmmSpec& gmm = detail::require_gmm(rc);
  const std::size_t n = ov.n.value_or(detail::extra_or<std::size_t>(rc, "n", 10000));
  const std::size_t ref_n = detail::extra_or<std::size_t>(rc, "reference_n", std::min<std::size_t>(n, 5000));
  const std::size_t record = ov.record.value_or(detail::extra_or<std::size_t>(rc, "record_trajectories", 0));
  if (n < 2) throw ConfigError("sample needs n >= 2");
  validate(rc.sampler, schedule);

  const SampleMatrix reference = sample_data(gmm, ref_n, seed, rc.threads);
  const SampleRun run = run_sampler(schedule, gmm, rc.sampler, n, reference, rc.threads, record);

  write_text_file(rc.out / "samples.csv", samples_csv(run.result.samples));
  Json report = report_to_json(run.report);
  report["sampler"] = sampler_config_to_json(rc.sampler);
  report["schedule"] = schedule_to_json(schedule);
  report["reference_n"] = ref_n;
  write_text_file(rc.out / "report.json", dump_json(report));
  if (record > 0) write_text_file(rc.out / "trajectories.csv", trajectories_csv(run.result.trajectories, gmm.dim));
  log << "sampled " << n << " points with " << to_string(rc.sampler.kind) << "; cov_frobenius_error "
      << format_double(run.report.cov_frobenius_error) << ", mean_error_l2 " << format_double(run.report.mean_error_l2)
      << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepOptions {
  std::optional<std::vector<double>> gammas, deltas, rhos;
  std::optional<std::size_t> n;
  std::optional<std::size_t> steps;
};

struct SweepRow {
  double gamma = 0.0, delta = 0.0, rho = 0.0;
  SampleQualityReport report;
};

/// Full Cartesian sweep of the generalized sampler; every cell uses the same
/// seed and the same reference draws.
inline std::vector<SweepRow> run_sweep(const Schedule& schedule, const GmmSpec& gmm, SamplerConfig base,
                                       const std::vector<double>& gammas, const std::vector<double>& deltas,
                                       const std::vector<double>& rhos, std::size_t n, std::size_t ref_n,
                                       std::size_t threads) {
  if (gammas.empty() || deltas.empty() || rhos.empty()) throw ConfigError("sweep lists must be nonempty");
  base.kind = SamplerKind::generalized;
  validate(base, schedule);
  const SampleMatrix reference = sample_data(gmm, ref_n, base.seed, threads);
  std::vector<SweepRow> rows;
  for (double rho : rhos) {
    for (double gamma : gammas) {
      for (double delta : deltas) {
        SamplerConfig c = base;
        c.rho = rho;
        c.gamma = gamma;
        c.delta = delta;
        SweepRow row{gamma, delta, rho, run_sampler(schedule, gmm, c, n, reference, threads).report};
        rows.push_back(row);
      }
    }
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "gamma,delta,rho,mean_error_l2,cov_frobenius_error,energy_distance,gaussian_kl\n";
  for (const SweepRow& r : rows) {
    os << format_double(r.gamma) << ',' << format_double(r.delta) << ',' << format_double(r.rho) << ','
       << format_double(r.report.mean_error_l2) << ',' << format_double(r.report.cov_frobenius_error) << ','
       << format_double(r.report.energy_distance.value_or(std::numeric_limits<double>::quiet_NaN())) << ','
       << (r.report.gaussian_kl ? format_double(*r.report.gaussian_kl) : std::string("")) << '\n';
  }
  return os.str();
}

/// Index of the row with the smallest energy distance (first on ties).
inline std::size_t best_sweep_row(const std::vector<SweepRow>& rows) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (*rows[i].report.energy_distance < *rows[best].report.energy_distance) best = i;
  }
  return best;
}

inline std::vector<double> default_gamma_grid() { return {0.5, 0.75, 1.0, 1.25, 1.5}; }
inline std::vector<double> default_delta_grid() { return {0.8, 0.9, 1.0, 1.1, 1.2}; }

inline int cmd_sweep(const CommonOptions& common, const SweepOptions& opt, std::ostream& log) {
  RunConfig rc = load_run_config(common);
  const std::uint64_t seed = detail::require_seed(rc, "sweep");
  const Schedule& schedule = detail::require_schedule(rc);
  const GmmSpec& gmm = detail::require_gmm(rc);
  const Json& sec = detail::extra_section(rc, "sweep");
  const auto gammas = opt.gammas.value_or(detail::section_or(sec, "gamma", default_gamma_grid()));
  const auto deltas = opt.deltas.value_or(detail::section_or(sec, "delta", default_delta_grid()));
  const auto rhos = opt.rhos.value_or(detail::section_or(sec, "rho", std::vector<double>{1.0}));
  const std::size_t n = opt.n.value_or(detail::extra_or<std::size_t>(rc, "n", 2000));
  const std::size_t ref_n = detail::extra_or<std::size_t>(rc, "reference_n", n);
  if (n < 2) throw ConfigError("sweep needs n >= 2");
  SamplerConfig base = rc.sampler;
  base.seed = seed;
  if (opt.steps) base.steps = *opt.steps;

  const std::vector<SweepRow> rows = run_sweep(schedule, gmm, base, gammas, deltas, rhos, n, ref_n, rc.threads);
  write_text_file(rc.out / "sweep.csv", sweep_csv(rows));
  const SweepRow& best = rows[best_sweep_row(rows)];
  Json summary;
  summary["cells"] = rows.size();
  summary["best"] = {{"gamma", best.gamma}, {"delta", best.delta}, {"rho", best.rho},
                     {"report", report_to_json(best.report)}};
  summary["sampler"] = sampler_config_to_json(base);
  summary["n"] = n;
  summary["reference_n"] = ref_n;
  write_text_file(rc.out / "sweep_summary.json", dump_json(summary));
  log << "swept " << rows.size() << " cells; best energy distance " << format_double(*best.report.energy_distance)
      << " at gamma=" << best.gamma << " delta=" << best.delta << " rho=" << best.rho << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// info

struct InfoOptions {
  bool kong = false;
  std::optional<std::size_t> points;
  std::optional<double> lambda_min, lambda_max;
  std::optional<std::size_t> n_mc;
};

inline int cmd_info(const CommonOptions& common, const InfoOptions& opt, std::ostream& log) {
  RunConfig rc = load_run_config(common);
  const GmmSpec& gmm = detail::require_gmm(rc);
  const Json& sec = detail::extra_section(rc, "info");
  const bool kong = opt.kong || detail::section_or(sec, "kong", false);
  const std::size_t points = opt.points.value_or(detail::section_or<std::size_t>(sec, "points", 50));
  const std::size_t n_mc = opt.n_mc.value_or(detail::section_or<std::size_t>(sec, "n_mc", 20000));
  if (points < 2) throw ConfigError("info needs at least 2 points");

  double lo = 0.0, hi = 0.0;
  if (kong) {
    lo = 0.05;
    hi = 20.0;
  } else {
    const Schedule& schedule = detail::require_schedule(rc);
    std::tie(lo, hi) = lambda_range(schedule);
  }
  lo = opt.lambda_min.value_or(detail::section_or(sec, "lambda_min", lo));
  hi = opt.lambda_max.value_or(detail::section_or(sec, "lambda_max", hi));
  if (!(lo < hi)) throw ConfigError("info needs lambda_min < lambda_max");

  std::vector<SnrPoint> grid;
  for (std::size_t i = 0; i < points; ++i) {
    const double lam =
        (i + 1 == points) ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    grid.push_back(kong ? kong_point(lam) : tilde_eval(detail::require_schedule(rc), lam));
  }
  std::uint64_t seed = 0;
  if (gmm.components() > 1) seed = detail::require_seed(rc, "info (Monte Carlo for mixtures)");
  const std::vector<InfoCurvePoint> curve = info_curve(gmm, grid, n_mc, seed, rc.threads);
  const auto path = rc.out / "info.csv";
  write_text_file(path, info_csv(curve));
  log << "wrote " << path.string() << " (" << curve.size() << " rows" << (kong ? ", kong channel" : "") << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// snrspace

struct SnrspaceOptions {
  std::vector<std::string> schedules;  // family names; empty = config schedule or all built-ins
  std::optional<std::size_t> points;
};

inline std::string file_stem(const Schedule& s) {
  std::string name = s.name();
  for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return name;
}

inline int cmd_snrspace(const CommonOptions& common, const SnrspaceOptions& opt, std::ostream& log) {
  RunConfig rc = load_run_config(common);
  std::vector<Schedule> schedules;
  for (const std::string& name : opt.schedules) schedules.push_back(make_schedule(parse_family(name)));
  if (schedules.empty() && rc.schedule) schedules.push_back(*rc.schedule);
  if (schedules.empty()) {
    for (auto f : {ScheduleFamily::vp, ScheduleFamily::ve, ScheduleFamily::iddpm, ScheduleFamily::fm_ot}) {
      schedules.push_back(make_schedule(f));
    }
  }
  const std::size_t points =
      opt.points.value_or(detail::section_or<std::size_t>(detail::extra_section(rc, "snrspace"), "points", 200));
  for (const Schedule& s : schedules) {
    const auto path = rc.out / ("snrspace_" + file_stem(s) + ".csv");
    write_text_file(path, snrspace_csv(s, points));
    log << "wrote " << path.string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyOptions {
  VerifyLevel level = VerifyLevel::fast;
  bool mutate = false;
};

inline int cmd_verify(const CommonOptions& common, const VerifyOptions& opt, std::ostream& log) {
  const std::size_t threads = resolve_threads(common.threads);
  struct MutationGuard {
    explicit MutationGuard(bool on) { testing::bracket_sign_mutation().store(on); }
    ~MutationGuard() { testing::bracket_sign_mutation().store(false); }
  } guard(opt.mutate);
  const std::vector<CheckResult> results = run_verification(opt.level, threads);
  bool ok = true;
  Json report = Json::array();
  for (const CheckResult& r : results) {
    log << (r.passed ? "PASS " : "FAIL ") << r.name << "  [" << r.detail << "]\n";
    ok = ok && r.passed;
    report.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
  }
  log << (ok ? "all checks passed" : "verification FAILED") << " (" << results.size() << " checks"
      << (opt.mutate ? ", mutation enabled" : "") << ")\n";
  if (common.out) write_text_file(std::filesystem::path(*common.out) / "verify.json", dump_json(report));
  return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace s2n
