// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// mor-kit <train|sweep|bench|fault|inspect>. Exit codes: 0 success,
// 2 config or schema error, 3 numeric divergence, 4 I/O error.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mor/checkpoint.hpp"
#include "mor/config.hpp"
#include "mor/experiments.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kGenericError = 1;
constexpr int kConfigError = 2;
constexpr int kDivergenceError = 3;
constexpr int kIoError = 4;

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--seed", flags.seed, "override the config seed")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
  cmd->add_option("--out", flags.out_dir, "override the output directory");
}

// precedence: flag > environment > config file
mor::ExperimentConfig resolve(const CommonFlags& flags) {
  mor::ExperimentConfig config = mor::load_config(flags.config_path);
  mor::apply_env_overrides(config);
  if (flags.seed_set) config.seed = flags.seed;
  if (!flags.out_dir.empty()) config.output.dir = flags.out_dir;
  mor::validate(config);
  return config;
}

void print_artifacts(const std::vector<std::string>& artifacts) {
  for (const std::string& path : artifacts) std::printf("wrote %s\n", path.c_str());
}

int cmd_train(const CommonFlags& flags) {
  mor::TrainRun run = mor::run_train(resolve(flags));
  std::printf("final task mse %.6g, balance loss %.6g\n", run.result.final_task,
              run.report.balance_loss_total);
  print_artifacts(run.artifacts);
  return kOk;
}

int cmd_sweep(const CommonFlags& flags, const std::vector<std::size_t>& routers) {
  mor::SweepRun run = mor::run_sweep(resolve(flags), routers);
  for (const mor::SweepRow& row : run.rows) {
    std::printf("r=%zu (%s): task %.6g, cov %.4f, ratio %.2f, train %.1f ms, fwd %.3f us\n",
                row.n_routers, row.mode.c_str(), row.final_task, row.cov_mean,
                row.max_min_ratio_mean, row.train_wall_ms, row.forward_us);
  }
  print_artifacts(run.artifacts);
  return kOk;
}

int cmd_bench(const CommonFlags& flags, const std::vector<std::size_t>& routers) {
  mor::BenchRun run = mor::run_bench(resolve(flags), routers);
  for (const mor::LatencyEntry& e : run.report.entries) {
    std::printf("r=%zu: median %.3f us/token, mean %.3f +- %.3f, overhead %+.2f%%\n",
                e.n_routers, e.bench.median_us, e.bench.mean_us, e.bench.stddev_us,
                100.0 * e.overhead_vs_baseline);
  }
  print_artifacts(run.artifacts);
  return kOk;
}

int cmd_fault(const CommonFlags& flags, const std::vector<double>& sigmas,
              std::size_t seeds, std::size_t inputs) {
  mor::FaultRun run = mor::run_fault(resolve(flags), sigmas, seeds, inputs);
  for (const mor::FaultSummary& s : run.summary) {
    std::printf("%s sigma=%g: agreement single %.4f vs mor %.4f, diff %.4f [%.4f, %.4f]\n",
                s.fault.c_str(), s.sigma, s.mean_single, s.mean_mor, s.diff_mean, s.ci_lo,
                s.ci_hi);
  }
  print_artifacts(run.artifacts);
  return kOk;
}

int cmd_inspect(const std::string& checkpoint) {
  std::fputs(mor::inspect_checkpoint(checkpoint).c_str(), stdout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale mixture-of-routers adapter toolkit"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "train one model and write its artifacts");
  add_common(train, train_flags);

  CommonFlags sweep_flags;
  std::vector<std::size_t> sweep_routers = {1, 2, 3, 4};
  CLI::App* sweep = app.add_subcommand("sweep", "train once per router count");
  add_common(sweep, sweep_flags);
  sweep->add_option("--routers", sweep_routers, "router counts, e.g. 1,2,3,4")
      ->delimiter(',');

  CommonFlags bench_flags;
  std::vector<std::size_t> bench_routers = {1, 2, 3, 4};
  CLI::App* bench = app.add_subcommand("bench", "forward latency per router count");
  add_common(bench, bench_flags);
  bench->add_option("--routers", bench_routers, "router counts, e.g. 1,2,3,4")
      ->delimiter(',');

  CommonFlags fault_flags;
  std::vector<double> fault_sigmas = {0.5, 1.0};
  std::size_t fault_seeds = 20;
  std::size_t fault_inputs = 10000;
  CLI::App* fault = app.add_subcommand("fault", "router-fault degradation, both architectures");
  add_common(fault, fault_flags);
  fault->add_option("--sigma", fault_sigmas, "logit-noise levels, e.g. 0.5,1.0")
      ->delimiter(',');
  fault->add_option("--seeds", fault_seeds, "number of matched seeds");
  fault->add_option("--inputs", fault_inputs, "probe inputs per seed");

  std::string inspect_path;
  CLI::App* inspect = app.add_subcommand("inspect", "summarize a checkpoint");
  inspect->add_option("checkpoint", inspect_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (train->parsed()) return cmd_train(train_flags);
    if (sweep->parsed()) return cmd_sweep(sweep_flags, sweep_routers);
    if (bench->parsed()) return cmd_bench(bench_flags, bench_routers);
    if (fault->parsed()) return cmd_fault(fault_flags, fault_sigmas, fault_seeds, fault_inputs);
    if (inspect->parsed()) return cmd_inspect(inspect_path);
  } catch (const mor::DivergenceError& e) {
    std::fprintf(stderr, "mor-kit: %s\n", e.what());
    return kDivergenceError;
  } catch (const mor::ConfigError& e) {
    std::fprintf(stderr, "mor-kit: %s\n", e.what());
    return kConfigError;
  } catch (const mor::IoError& e) {
    std::fprintf(stderr, "mor-kit: %s\n", e.what());
    return kIoError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mor-kit: %s\n", e.what());
    return kGenericError;
  }
  return kGenericError;
}
