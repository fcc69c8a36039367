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

#include <functional>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "s2n/commands.hpp"

namespace {

void add_common(CLI::App* cmd, s2n::CommonOptions& common) {
  cmd->add_option("--config", common.config, "JSON run config");
  cmd->add_option("--seed", common.seed, "64-bit seed (overrides the config)");
  cmd->add_option("--out", common.out, "output directory");
  cmd->add_option("--threads", common.threads, "worker threads (default: $SNRDIFF_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"s2ndiff: signal-to-noise diffusion toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "s2ndiff 0.1.0");

  s2n::CommonOptions common;
  std::function<int()> run;

  auto* schedules = app.add_subcommand("schedules", "dump a schedule table as CSV");
  s2n::SchedulesOptions sched_opt;
  add_common(schedules, common);
  schedules->add_option("--schedule", sched_opt.schedule, "family with default parameters (VP, VE, iDDPM, FM_OT)");
  schedules->add_option("--grid", sched_opt.grid_size, "number of rows");
  schedules->callback([&] { run = [&] { return s2n::cmd_schedules(common, sched_opt, std::cout); }; });

  auto* sample = app.add_subcommand("sample", "draw samples with the oracle score and report quality");
  s2n::SampleOverrides sample_opt;
  add_common(sample, common);
  sample->add_option("--n", sample_opt.n, "number of samples");
  sample->add_option("--kind", sample_opt.kind, "generalized|kingma|non_markovian|euler_backward|exact_reference");
  sample->add_option("--rho", sample_opt.rho);
  sample->add_option("--gamma", sample_opt.gamma);
  sample->add_option("--delta", sample_opt.delta);
  sample->add_option("--eta", sample_opt.eta);
  sample->add_option("--steps", sample_opt.steps);
  sample->add_option("--grid", sample_opt.grid, "uniform_t|uniform_lambda");
  sample->add_option("--t-start", sample_opt.t_start);
  sample->add_option("--t-end", sample_opt.t_end);
  sample->add_option("--record", sample_opt.record, "trajectories to write to trajectories.csv");
  sample->callback([&] { run = [&] { return s2n::cmd_sample(common, sample_opt, std::cout); }; });

  auto* sweep = app.add_subcommand("sweep", "grid search over (gamma, delta, rho)");
  s2n::SweepOptions sweep_opt;
  std::vector<double> gammas, deltas, rhos;
  add_common(sweep, common);
  sweep->add_option("--gammas", gammas, "comma-separated gamma values")->delimiter(',');
  sweep->add_option("--deltas", deltas, "comma-separated delta values")->delimiter(',');
  sweep->add_option("--rhos", rhos, "comma-separated rho values")->delimiter(',');
  sweep->add_option("--n", sweep_opt.n, "samples per cell");
  sweep->add_option("--steps", sweep_opt.steps);
  sweep->callback([&] {
    if (!gammas.empty()) sweep_opt.gammas = gammas;
    if (!deltas.empty()) sweep_opt.deltas = deltas;
    if (!rhos.empty()) sweep_opt.rhos = rhos;
    run = [&] { return s2n::cmd_sweep(common, sweep_opt, std::cout); };
  });

  auto* info = app.add_subcommand("info", "MMSE and dI/dlambda over a log-SNR grid");
  s2n::InfoOptions info_opt;
  add_common(info, common);
  info->add_flag("--kong", info_opt.kong, "use the channel alpha = sqrt(snr), sigma = 1 indexed by snr");
  info->add_option("--points", info_opt.points);
  info->add_option("--lambda-min", info_opt.lambda_min);
  info->add_option("--lambda-max", info_opt.lambda_max);
  info->add_option("--n-mc", info_opt.n_mc, "Monte Carlo draws per point for mixtures");
  info->callback([&] { run = [&] { return s2n::cmd_info(common, info_opt, std::cout); }; });

  auto* snrspace = app.add_subcommand("snrspace", "tabulate alpha_tilde and sigma_tilde over log-SNR");
  s2n::SnrspaceOptions snr_opt;
  add_common(snrspace, common);
  snrspace->add_option("--schedule", snr_opt.schedules, "families (repeatable); default: config or all built-ins");
  snrspace->add_option("--points", snr_opt.points);
  snrspace->callback([&] { run = [&] { return s2n::cmd_snrspace(common, snr_opt, std::cout); }; });

  auto* verify = app.add_subcommand("verify", "run the self-check suite");
  s2n::VerifyOptions verify_opt;
  std::string level = "fast";
  add_common(verify, common);
  verify->add_option("--level", level, "fast|full")->check(CLI::IsMember({"fast", "full"}));
  verify->add_flag("--mutate", verify_opt.mutate, "flip the sign of the generalized step's noise-prediction term");
  verify->callback([&] {
    verify_opt.level = level == "full" ? s2n::VerifyLevel::full : s2n::VerifyLevel::fast;
    run = [&] { return s2n::cmd_verify(common, verify_opt, std::cout); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : s2n::kExitConfig;
  }

  try {
    return run();
  } catch (const s2n::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return s2n::kExitNumerical;
  } catch (const s2n::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return s2n::kExitConfig;
  } catch (const s2n::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return s2n::kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return s2n::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return s2n::kExitNumerical;
  }
}
