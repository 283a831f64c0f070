// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/telemetry.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

#include "mor/kernels.hpp"
#include "mor/objective.hpp"

namespace mor {

BalanceReport balance_report(const ActivationStats& stats) {
  if (stats.layers.empty()) throw std::invalid_argument("balance report: empty stats");
  BalanceReport report;
  for (const LayerStats& ls : stats.layers) {
    if (ls.token_count == 0) {
      throw std::invalid_argument("balance report: layer with zero tokens");
    }
    LayerBalance lb;
    lb.histogram = ls.assign_counts;

    double mean = 0.0;
    for (std::uint64_t c : lb.histogram) mean += double(c);
    mean /= double(lb.histogram.size());
    double var = 0.0;
    for (std::uint64_t c : lb.histogram) {
      double d = double(c) - mean;
      var += d * d;
    }
    var /= double(lb.histogram.size());
    lb.cov = std::sqrt(var) / mean;

    std::uint64_t hi = lb.histogram[0], lo = lb.histogram[0];
    for (std::uint64_t c : lb.histogram) {
      hi = std::max(hi, c);
      lo = std::min(lo, c);
    }
    lb.max_min_ratio = double(hi) / double(std::max<std::uint64_t>(lo, 1));

    Vector t = ls.assign_fractions();
    Vector r = ls.mean_probs();
    lb.balance_value = double(ls.n_experts) * kernels::dot(t.data(), r.data(), t.size());
    report.balance_loss_total += lb.balance_value;
    report.layers.push_back(std::move(lb));
  }
  return report;
}

BenchResult bench_forward(const Model& model, std::size_t n_tokens, std::size_t warmup,
                          std::uint64_t seed) {
  if (warmup < 1) throw std::invalid_argument("bench: warmup must be >= 1");
  if (n_tokens < 1) throw std::invalid_argument("bench: need at least one token");

  Rng rng(seed);
  std::vector<Vector> inputs(n_tokens);
  for (Vector& x : inputs) {
    x.resize(model.d_in());
    for (double& v : x) v = rng.gaussian();
  }

  ForwardWorkspace ws;
  Vector out;
  for (std::size_t i = 0; i < warmup; ++i) {
    inference_forward(model, inputs[i % n_tokens], ws, out);
  }

  Vector us(n_tokens);
  for (std::size_t i = 0; i < n_tokens; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    inference_forward(model, inputs[i], ws, out);
    const auto t1 = std::chrono::steady_clock::now();
    us[i] = std::chrono::duration<double, std::micro>(t1 - t0).count();
  }

  BenchResult result;
  result.n_tokens = n_tokens;
  double mean = kernels::sum(us.data(), n_tokens) / double(n_tokens);
  double var = 0.0;
  for (double v : us) var += (v - mean) * (v - mean);
  result.mean_us = mean;
  result.stddev_us = std::sqrt(var / double(n_tokens));
  std::sort(us.begin(), us.end());
  result.median_us = n_tokens % 2 ? us[n_tokens / 2]
                                  : 0.5 * (us[n_tokens / 2 - 1] + us[n_tokens / 2]);
  return result;
}

LatencyReport latency_report(const std::vector<std::pair<std::size_t, BenchResult>>& runs) {
  if (runs.empty()) throw std::invalid_argument("latency report: no runs");
  std::size_t base = 0;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].first < runs[base].first) base = i;
  }
  const double base_mean = runs[base].second.mean_us;
  if (!(base_mean > 0.0)) throw std::invalid_argument("latency report: zero baseline time");

  LatencyReport report;
  for (const auto& [r, bench] : runs) {
    LatencyEntry entry;
    entry.n_routers = r;
    entry.bench = bench;
    entry.overhead_vs_baseline = (bench.mean_us - base_mean) / base_mean;
    report.entries.push_back(entry);
  }
  return report;
}

std::string balance_report_json(const BalanceReport& report) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const LayerBalance& l : report.layers) {
    layers.push_back(nlohmann::ordered_json{{"histogram", l.histogram},
                                            {"cov", l.cov},
                                            {"max_min_ratio", l.max_min_ratio},
                                            {"balance_value", l.balance_value}});
  }
  nlohmann::ordered_json root{{"layers", layers},
                              {"balance_loss_total", report.balance_loss_total}};
  return root.dump(2) + "\n";
}

void balance_histogram_csv(std::ostream& out, const BalanceReport& report,
                           const std::string& condition) {
  for (std::size_t l = 0; l < report.layers.size(); ++l) {
    const std::vector<std::uint64_t>& h = report.layers[l].histogram;
    for (std::size_t j = 0; j < h.size(); ++j) {
      out << l << ',' << j << ',' << h[j] << ',' << condition << '\n';
    }
  }
}

}  // namespace mor
