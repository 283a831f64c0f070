// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Optimization loop, synthetic regression tasks, a finite-difference
// gradient oracle, and router fault injection. Training is deterministic:
// fixed batch order, no dropout, and all randomness confined to explicit
// Rng arguments at construction time.

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "mor/model.hpp"
#include "mor/objective.hpp"

namespace mor {

/// NaN/inf encountered in the loss; training aborts with this.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
  enum class Kind { sgd, adam };
  Kind kind = Kind::adam;
  double lr = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p -= lr * wd * p, applied after the step
};

class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, std::size_t n_params);

  /// Apply one update: grads flattened in trainable_params order.
  void step(const std::vector<ParamBlock>& blocks, const Vector& grads);

 private:
  OptimizerConfig config_;
  Vector m_, v_;  // adam moments, flattened
  std::uint64_t t_ = 0;
};

// --- synthetic regression task -------------------------------------------

struct SyntheticTaskSpec {
  std::size_t clusters = 8;
  std::size_t d_in = 16;
  std::size_t d_out = 16;
  double noise_sigma = 0.05;
  double center_scale = 3.0;
};

struct SyntheticTask {
  SyntheticTaskSpec spec;
  std::vector<Vector> centers;     // one per cluster, pairwise distance >= 2
  std::vector<Matrix> generators;  // d_out x d_in per cluster
};

struct Sample {
  Vector x;
  Vector target;
  std::size_t cluster = 0;
};

using Dataset = std::vector<Sample>;

/// Draw cluster centers and per-cluster generator matrices.
SyntheticTask make_task(const SyntheticTaskSpec& spec, Rng& rng);

/// x ~ center_c + N(0, I) with c uniform; target = M_c x + N(0, sigma^2).
Dataset sample_dataset(const SyntheticTask& task, std::size_t n, Rng& rng);

Dataset generate_task(const SyntheticTaskSpec& spec, Rng& rng, std::size_t n);

/// Binary dataset cache: header (schema tag, seed, task spec) + records.
void save_dataset(const std::string& path, const Dataset& data,
                  const SyntheticTaskSpec& spec, std::uint64_t seed);
Dataset load_dataset(const std::string& path, SyntheticTaskSpec* spec_out = nullptr,
                     std::uint64_t* seed_out = nullptr);

// --- batch objective ------------------------------------------------------

struct BatchGrads {
  LossBreakdown loss;
  ModelGrads grads;
  ActivationStats stats;
};

/// Mean task loss over the batch plus balance penalties, with gradients.
/// The assignment fractions t are straight-through constants: taken from
/// `frozen_assign` when given (finite-difference harness), else from this
/// batch's own stats. `force` pins per-sample, per-layer selections.
BatchGrads batch_gradients(const Model& model, const Dataset& batch, double lambda_expert,
                           double lambda_router,
                           const std::vector<std::vector<SelectionOverride>>* force = nullptr,
                           const ActivationStats* frozen_assign = nullptr);

/// Loss only, same conventions; the closure the finite-difference oracle probes.
LossBreakdown batch_loss(const Model& model, const Dataset& batch, double lambda_expert,
                         double lambda_router,
                         const std::vector<std::vector<SelectionOverride>>* force = nullptr,
                         const ActivationStats* frozen_assign = nullptr);

/// Central differences (f(p+eps) - f(p-eps)) / 2 eps per coordinate,
/// flattened in block order. The loss closure must hold selections fixed.
Vector finite_diff_gradient(const std::function<double()>& loss,
                            const std::vector<ParamBlock>& params, double eps);

// --- training loop --------------------------------------------------------

struct TrainSettings {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer;
  double lambda_expert = 0.01;
  double lambda_router = 0.01;
};

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double task = 0.0;
  double balance_expert = 0.0;
  double balance_router = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;  // only nondeterministic column; excluded from replay checks
};

struct TrainResult {
  std::vector<StepLog> log;              // one row per optimizer step
  std::vector<double> epoch_task_mean;   // mean task loss per epoch
  ActivationStats final_stats;           // eval pass over the full dataset
  double final_task = 0.0;               // mean task loss of that eval pass
};

/// Full-batch-order-deterministic training. Throws DivergenceError on
/// non-finite loss.
TrainResult train(Model& model, const Dataset& data, const TrainSettings& settings);

/// Mean task loss over a dataset; optionally accumulates routing stats.
double mean_task_loss(const Model& model, const Dataset& data,
                      ActivationStats* stats = nullptr);

// --- fault injection ------------------------------------------------------

struct FaultSpec {
  enum class Mode { logit_noise, weight_zero };
  Mode mode = Mode::logit_noise;
  std::size_t target_router = 0;
  double noise_sigma = 0.0;
};

/// Perturbed copy: per layer, the target sub-router's weight matrix gets
/// N(0, sigma^2) added (logit_noise) or is zeroed (weight_zero).
Model inject_router_fault(const Model& model, const FaultSpec& fault, Rng& rng);

/// Mean fractional overlap of the selected expert sets of the two models,
/// averaged over layers and inputs. 1.0 means identical selections.
double selection_agreement(const Model& a, const Model& b,
                           const std::vector<Vector>& inputs);

}  // namespace mor
