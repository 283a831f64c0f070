// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end experiment drivers behind the CLI commands. Each run_* takes
// a validated config, writes its artifacts into config.output.dir, and
// returns the numbers it wrote so tests and callers can assert on them
// without re-parsing files. Artifact bytes are deterministic for a fixed
// config + seed except for wall-clock columns.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mor/config.hpp"
#include "mor/telemetry.hpp"
#include "mor/trainer.hpp"

namespace mor {

/// create_directories; IoError on failure.
void ensure_dir(const std::string& dir);

struct TrainRun {
  TrainResult result;
  BalanceReport report;
  std::vector<std::string> artifacts;  // paths written, in order
};

/// Train one model per the config. Always writes checkpoint.json,
/// train_log.csv, and effective_config.json; balance_report.json and
/// balance_histogram.csv follow output.formats.
TrainRun run_train(const ExperimentConfig& config);

struct SweepRow {
  std::size_t n_routers = 1;  // 1 runs the single-router baseline
  std::string mode;
  double final_task = 0.0;
  double cov_mean = 0.0;            // activation CoV averaged over layers
  double max_min_ratio_mean = 0.0;
  double balance_total = 0.0;
  double train_wall_ms = 0.0;
  double forward_us = 0.0;          // median per-token forward latency
};

struct SweepRun {
  std::vector<SweepRow> rows;
  std::vector<std::string> artifacts;
};

/// One trained model per router count on a shared dataset; r=1 uses
/// single mode. Writes sweep.csv / sweep.json per output.formats.
SweepRun run_sweep(const ExperimentConfig& config,
                   const std::vector<std::size_t>& router_counts);

struct BenchRun {
  LatencyReport report;
  std::vector<std::string> artifacts;
};

/// Forward latency of untrained models per router count (training does
/// not change the op count). Writes bench.csv / bench.json.
BenchRun run_bench(const ExperimentConfig& config,
                   const std::vector<std::size_t>& router_counts);

struct FaultRow {
  std::string arch;   // "single" or "mor"
  std::string fault;  // "logit_noise" or "weight_zero"
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double agreement = 0.0;   // selection agreement of faulted vs clean model
  double task_delta = 0.0;  // faulted eval MSE - clean eval MSE
};

struct FaultSummary {
  std::string fault;
  double sigma = 0.0;
  double mean_single = 0.0;
  double mean_mor = 0.0;
  double diff_mean = 0.0;  // mor - single agreement, paired by seed
  double ci_lo = 0.0;      // 95% confidence interval of the paired difference
  double ci_hi = 0.0;
};

struct FaultRun {
  std::vector<FaultRow> rows;
  std::vector<FaultSummary> summary;
  std::vector<std::string> artifacts;
};

/// Trains a single-router and a MoR model per seed, injects each fault
/// into router 0, and measures selection agreement against the clean
/// model on n_inputs fresh inputs plus the eval-MSE delta. sigmas drive
/// logit_noise conditions; weight_zero is always included.
FaultRun run_fault(const ExperimentConfig& config, const std::vector<double>& sigmas,
                   std::size_t n_seeds, std::size_t n_inputs);

}  // namespace mor
