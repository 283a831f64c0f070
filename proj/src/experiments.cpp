// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/experiments.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "json.hpp"

#include "mor/checkpoint.hpp"

namespace mor {

namespace {

constexpr std::size_t kSweepBenchTokens = 2000;
constexpr std::size_t kSweepBenchWarmup = 200;
constexpr std::size_t kBenchTokens = 4000;
constexpr std::size_t kBenchWarmup = 400;
constexpr std::size_t kFaultEvalSamples = 256;

// %.17g round-trips doubles exactly and is byte-stable for equal values
std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// wall-clock columns are the one non-deterministic artifact content; keep
// them short instead of exact
std::string ms3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

bool wants(const ExperimentConfig& config, const char* format) {
  for (const std::string& f : config.output.formats) {
    if (f == format) return true;
  }
  return false;
}

double layer_mean(const BalanceReport& report, double LayerBalance::*field) {
  double acc = 0.0;
  for (const LayerBalance& l : report.layers) acc += l.*field;
  return acc / double(report.layers.size());
}

double wall_ms_total(const TrainResult& result) {
  double acc = 0.0;
  for (const StepLog& s : result.log) acc += s.wall_ms;
  return acc;
}

// two-sided 95% Student-t quantile, dof-indexed; normal tail beyond 30
double t_quantile_975(std::size_t dof) {
  static constexpr std::array<double, 30> table = {
      12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
      2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
      2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof == 0) throw std::invalid_argument("t quantile: dof must be >= 1");
  return dof <= table.size() ? table[dof - 1] : 1.96;
}

double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / double(xs.size());
}

ExperimentConfig arch_config(const ExperimentConfig& config, std::size_t n_routers) {
  ExperimentConfig c = config;
  if (n_routers == 1) {
    c.model.mode = RoutingMode::single;
    c.model.n_routers = 1;
    c.model.k_routers = 1;
  } else {
    c.model.mode = RoutingMode::mor;
    c.model.n_routers = n_routers;
    // the axis means "r routers jointly allocate", so all of them stay active
    c.model.k_routers = n_routers;
  }
  return c;
}

}  // namespace

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output dir: " + dir +
                  (ec ? " (" + ec.message() + ")" : ""));
  }
}

TrainRun run_train(const ExperimentConfig& config) {
  validate(config);
  ensure_dir(config.output.dir);

  Rng rng(config.seed);
  SyntheticTask task = make_task(config.task, rng);
  Dataset data = sample_dataset(task, config.n_samples, rng);
  // same stream discipline as run_sweep, so a sweep over {1} reproduces
  // this run's numbers exactly
  Rng model_rng = rng.split();
  Model model = make_model(config.model, model_rng);

  TrainRun run;
  run.result = train(model, data, config.train);
  run.report = balance_report(run.result.final_stats);

  const std::string dir = config.output.dir;
  const std::string ckpt = dir + "/checkpoint.json";
  save_model(model, ckpt);
  run.artifacts.push_back(ckpt);

  std::ostringstream log;
  log << "step,epoch,task,balance_expert,balance_router,total,wall_ms\n";
  for (const StepLog& s : run.result.log) {
    log << s.step << ',' << s.epoch << ',' << g17(s.task) << ',' << g17(s.balance_expert)
        << ',' << g17(s.balance_router) << ',' << g17(s.total) << ',' << ms3(s.wall_ms)
        << '\n';
  }
  write_text(dir + "/train_log.csv", log.str());
  run.artifacts.push_back(dir + "/train_log.csv");

  if (wants(config, "json")) {
    write_text(dir + "/balance_report.json", balance_report_json(run.report));
    run.artifacts.push_back(dir + "/balance_report.json");
  }
  if (wants(config, "csv")) {
    std::ostringstream hist;
    hist << kHistogramCsvHeader;
    balance_histogram_csv(hist, run.report,
                          config.model.mode == RoutingMode::mor ? "post_mor" : "pre_mor");
    write_text(dir + "/balance_histogram.csv", hist.str());
    run.artifacts.push_back(dir + "/balance_histogram.csv");
  }

  write_text(dir + "/effective_config.json", encode_config(config));
  run.artifacts.push_back(dir + "/effective_config.json");
  return run;
}

SweepRun run_sweep(const ExperimentConfig& config,
                   const std::vector<std::size_t>& router_counts) {
  validate(config);
  if (router_counts.empty()) throw ConfigError("sweep: need at least one router count");
  for (std::size_t r : router_counts) {
    if (r < 1) throw ConfigError("sweep: router counts must be >= 1");
  }
  ensure_dir(config.output.dir);

  Rng rng(config.seed);
  SyntheticTask task = make_task(config.task, rng);
  Dataset data = sample_dataset(task, config.n_samples, rng);

  SweepRun run;
  for (std::size_t r : router_counts) {
    ExperimentConfig cr = arch_config(config, r);
    Rng model_rng = rng.split();
    Model model = make_model(cr.model, model_rng);
    TrainResult res = train(model, data, cr.train);
    BalanceReport report = balance_report(res.final_stats);

    SweepRow row;
    row.n_routers = r;
    row.mode = to_string(cr.model.mode);
    row.final_task = res.final_task;
    row.cov_mean = layer_mean(report, &LayerBalance::cov);
    row.max_min_ratio_mean = layer_mean(report, &LayerBalance::max_min_ratio);
    row.balance_total = report.balance_loss_total;
    row.train_wall_ms = wall_ms_total(res);
    row.forward_us =
        bench_forward(model, kSweepBenchTokens, kSweepBenchWarmup, config.seed).median_us;
    run.rows.push_back(std::move(row));
  }

  if (wants(config, "csv")) {
    std::ostringstream csv;
    csv << "n_routers,mode,final_task,cov,max_min_ratio,balance_total,train_ms,forward_us\n";
    for (const SweepRow& row : run.rows) {
      csv << row.n_routers << ',' << row.mode << ',' << g17(row.final_task) << ','
          << g17(row.cov_mean) << ',' << g17(row.max_min_ratio_mean) << ','
          << g17(row.balance_total) << ',' << ms3(row.train_wall_ms) << ','
          << ms3(row.forward_us) << '\n';
    }
    write_text(config.output.dir + "/sweep.csv", csv.str());
    run.artifacts.push_back(config.output.dir + "/sweep.csv");
  }
  if (wants(config, "json")) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const SweepRow& row : run.rows) {
      rows.push_back(nlohmann::ordered_json{{"n_routers", row.n_routers},
                                            {"mode", row.mode},
                                            {"final_task", row.final_task},
                                            {"cov", row.cov_mean},
                                            {"max_min_ratio", row.max_min_ratio_mean},
                                            {"balance_total", row.balance_total},
                                            {"train_ms", row.train_wall_ms},
                                            {"forward_us", row.forward_us}});
    }
    write_text(config.output.dir + "/sweep.json",
               nlohmann::ordered_json{{"rows", rows}}.dump(2) + "\n");
    run.artifacts.push_back(config.output.dir + "/sweep.json");
  }
  return run;
}

BenchRun run_bench(const ExperimentConfig& config,
                   const std::vector<std::size_t>& router_counts) {
  validate(config);
  if (router_counts.empty()) throw ConfigError("bench: need at least one router count");
  for (std::size_t r : router_counts) {
    if (r < 1) throw ConfigError("bench: router counts must be >= 1");
  }
  ensure_dir(config.output.dir);

  Rng rng(config.seed);
  std::vector<std::pair<std::size_t, BenchResult>> runs;
  runs.reserve(router_counts.size());
  for (std::size_t r : router_counts) {
    ExperimentConfig cr = arch_config(config, r);
    Rng model_rng = rng.split();
    Model model = make_model(cr.model, model_rng);
    runs.emplace_back(r, bench_forward(model, kBenchTokens, kBenchWarmup, config.seed));
  }

  BenchRun run;
  run.report = latency_report(runs);

  if (wants(config, "csv")) {
    std::ostringstream csv;
    csv << "n_routers,mean_us,stddev_us,median_us,overhead_vs_baseline\n";
    for (const LatencyEntry& e : run.report.entries) {
      csv << e.n_routers << ',' << ms3(e.bench.mean_us) << ',' << ms3(e.bench.stddev_us)
          << ',' << ms3(e.bench.median_us) << ',' << g17(e.overhead_vs_baseline) << '\n';
    }
    write_text(config.output.dir + "/bench.csv", csv.str());
    run.artifacts.push_back(config.output.dir + "/bench.csv");
  }
  if (wants(config, "json")) {
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const LatencyEntry& e : run.report.entries) {
      entries.push_back(nlohmann::ordered_json{{"n_routers", e.n_routers},
                                               {"mean_us", e.bench.mean_us},
                                               {"stddev_us", e.bench.stddev_us},
                                               {"median_us", e.bench.median_us},
                                               {"overhead_vs_baseline", e.overhead_vs_baseline}});
    }
    write_text(config.output.dir + "/bench.json",
               nlohmann::ordered_json{{"n_tokens", kBenchTokens}, {"entries", entries}}.dump(2) +
                   "\n");
    run.artifacts.push_back(config.output.dir + "/bench.json");
  }
  return run;
}

FaultRun run_fault(const ExperimentConfig& config, const std::vector<double>& sigmas,
                   std::size_t n_seeds, std::size_t n_inputs) {
  validate(config);
  if (config.model.n_routers < 2) {
    throw ConfigError(
        "fault: model.n_routers must be >= 2 to compare against the single-router baseline");
  }
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw ConfigError("fault: sigma values must be >= 0");
  }
  if (n_seeds < 2) throw ConfigError("fault: need at least 2 seeds for an interval");
  if (n_inputs < 1) throw ConfigError("fault: need at least 1 probe input");
  ensure_dir(config.output.dir);

  struct Cond {
    FaultSpec::Mode mode;
    double sigma;
    const char* name;
  };
  std::vector<Cond> conds;
  for (double s : sigmas) conds.push_back({FaultSpec::Mode::logit_noise, s, "logit_noise"});
  conds.push_back({FaultSpec::Mode::weight_zero, 0.0, "weight_zero"});

  FaultRun run;
  // agreement per condition and arch (0 = single, 1 = mor), one entry per seed
  std::vector<std::array<std::vector<double>, 2>> agree(conds.size());

  for (std::size_t s = 0; s < n_seeds; ++s) {
    std::uint64_t seed_s = config.seed + s;
    Rng rng(seed_s);
    SyntheticTask task = make_task(config.task, rng);
    Dataset data = sample_dataset(task, config.n_samples, rng);
    Dataset eval = sample_dataset(task, kFaultEvalSamples, rng);
    std::vector<Vector> inputs(n_inputs, Vector(config.model.d_in));
    for (Vector& x : inputs) {
      for (double& v : x) v = rng.gaussian();
    }

    for (int arch = 0; arch < 2; ++arch) {
      ExperimentConfig ca = arch_config(config, arch == 0 ? 1 : config.model.n_routers);
      Rng model_rng = rng.split();
      Model model = make_model(ca.model, model_rng);
      train(model, data, ca.train);
      double clean = mean_task_loss(model, eval);

      for (std::size_t c = 0; c < conds.size(); ++c) {
        FaultSpec spec;
        spec.mode = conds[c].mode;
        spec.target_router = 0;
        spec.noise_sigma = conds[c].sigma;
        Rng fault_rng = rng.split();
        Model faulted = inject_router_fault(model, spec, fault_rng);

        FaultRow row;
        row.arch = arch == 0 ? "single" : "mor";
        row.fault = conds[c].name;
        row.sigma = conds[c].sigma;
        row.seed = seed_s;
        row.agreement = selection_agreement(model, faulted, inputs);
        row.task_delta = mean_task_loss(faulted, eval) - clean;
        agree[c][arch].push_back(row.agreement);
        run.rows.push_back(std::move(row));
      }
    }
  }

  for (std::size_t c = 0; c < conds.size(); ++c) {
    FaultSummary sum;
    sum.fault = conds[c].name;
    sum.sigma = conds[c].sigma;
    sum.mean_single = mean_of(agree[c][0]);
    sum.mean_mor = mean_of(agree[c][1]);
    std::vector<double> diff(n_seeds);
    for (std::size_t s = 0; s < n_seeds; ++s) diff[s] = agree[c][1][s] - agree[c][0][s];
    sum.diff_mean = mean_of(diff);
    double var = 0.0;
    for (double d : diff) var += (d - sum.diff_mean) * (d - sum.diff_mean);
    var /= double(n_seeds - 1);
    double half = t_quantile_975(n_seeds - 1) * std::sqrt(var / double(n_seeds));
    sum.ci_lo = sum.diff_mean - half;
    sum.ci_hi = sum.diff_mean + half;
    run.summary.push_back(std::move(sum));
  }

  if (wants(config, "csv")) {
    std::ostringstream csv;
    csv << "arch,fault,sigma,seed,agreement,task_delta\n";
    for (const FaultRow& row : run.rows) {
      csv << row.arch << ',' << row.fault << ',' << g17(row.sigma) << ',' << row.seed << ','
          << g17(row.agreement) << ',' << g17(row.task_delta) << '\n';
    }
    write_text(config.output.dir + "/fault.csv", csv.str());
    run.artifacts.push_back(config.output.dir + "/fault.csv");

    std::ostringstream sums;
    sums << "fault,sigma,mean_single,mean_mor,diff_mean,ci_lo,ci_hi\n";
    for (const FaultSummary& s : run.summary) {
      sums << s.fault << ',' << g17(s.sigma) << ',' << g17(s.mean_single) << ','
           << g17(s.mean_mor) << ',' << g17(s.diff_mean) << ',' << g17(s.ci_lo) << ','
           << g17(s.ci_hi) << '\n';
    }
    write_text(config.output.dir + "/fault_summary.csv", sums.str());
    run.artifacts.push_back(config.output.dir + "/fault_summary.csv");
  }
  if (wants(config, "json")) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const FaultRow& row : run.rows) {
      rows.push_back(nlohmann::ordered_json{{"arch", row.arch},
                                            {"fault", row.fault},
                                            {"sigma", row.sigma},
                                            {"seed", row.seed},
                                            {"agreement", row.agreement},
                                            {"task_delta", row.task_delta}});
    }
    nlohmann::ordered_json summary = nlohmann::ordered_json::array();
    for (const FaultSummary& s : run.summary) {
      summary.push_back(nlohmann::ordered_json{{"fault", s.fault},
                                               {"sigma", s.sigma},
                                               {"mean_single", s.mean_single},
                                               {"mean_mor", s.mean_mor},
                                               {"diff_mean", s.diff_mean},
                                               {"ci_lo", s.ci_lo},
                                               {"ci_hi", s.ci_hi}});
    }
    write_text(config.output.dir + "/fault.json",
               nlohmann::ordered_json{{"rows", rows}, {"summary", summary}}.dump(2) + "\n");
    run.artifacts.push_back(config.output.dir + "/fault.json");
  }
  return run;
}

}  // namespace mor
