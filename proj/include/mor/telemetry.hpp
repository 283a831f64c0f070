// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pure reporting over routing stats: expert-activation histograms with
// balance metrics, and single-threaded forward-latency measurement.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>

#include "mor/model.hpp"

namespace mor {

struct LayerBalance {
  std::vector<std::uint64_t> histogram;  // top-k assignment counts per expert
  double cov = 0.0;                      // std(counts) / mean(counts)
  double max_min_ratio = 1.0;            // max(counts) / max(min(counts), 1)
  double balance_value = 0.0;            // this layer's N * sum t_j R_j term
};

struct BalanceReport {
  std::vector<LayerBalance> layers;
  double balance_loss_total = 0.0;
};

/// Histogram + balance metrics per layer. The min count is clamped to 1 in
/// the ratio so fully idle experts yield a finite (still damning) number.
BalanceReport balance_report(const ActivationStats& stats);

struct BenchResult {
  std::size_t n_tokens = 0;
  double mean_us = 0.0;  // all three are wall time per token
  double stddev_us = 0.0;
  double median_us = 0.0;
};

/// Time the allocation-free forward path over fixed seeded inputs,
/// single-threaded, after `warmup` untimed passes.
BenchResult bench_forward(const Model& model, std::size_t n_tokens, std::size_t warmup,
                          std::uint64_t seed = 1234);

struct LatencyEntry {
  std::size_t n_routers = 1;
  BenchResult bench;
  double overhead_vs_baseline = 0.0;  // (mean_r - mean_base) / mean_base
};

struct LatencyReport {
  std::vector<LatencyEntry> entries;
};

/// Overheads relative to the smallest-router-count entry (r=1 when present).
LatencyReport latency_report(const std::vector<std::pair<std::size_t, BenchResult>>& runs);

/// Report as deterministic pretty JSON.
std::string balance_report_json(const BalanceReport& report);

inline constexpr const char* kHistogramCsvHeader = "layer,expert_id,count,condition\n";

/// One row per layer x expert under the given condition label; the caller
/// writes kHistogramCsvHeader first.
void balance_histogram_csv(std::ostream& out, const BalanceReport& report,
                           const std::string& condition);

}  // namespace mor
