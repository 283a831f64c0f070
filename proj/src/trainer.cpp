// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mor/kernels.hpp"

namespace mor {

namespace {

constexpr char kDatasetMagic[8] = {'m', 'o', 'r', 'd', 's', 'e', 't', '1'};

double squared_distance(const Vector& a, const Vector& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// balance with R from r_stats and the straight-through t from t_stats
double mixed_balance_expert(const ActivationStats& r_stats, const ActivationStats& t_stats) {
  double total = 0.0;
  for (std::size_t l = 0; l < r_stats.layers.size(); ++l) {
    Vector t = t_stats.layers[l].assign_fractions();
    Vector r = r_stats.layers[l].mean_probs();
    total += double(r_stats.layers[l].n_experts) * kernels::dot(t.data(), r.data(), t.size());
  }
  return total;
}

double mixed_balance_router(const ActivationStats& r_stats, const ActivationStats& t_stats) {
  double total = 0.0;
  for (std::size_t l = 0; l < r_stats.layers.size(); ++l) {
    if (!r_stats.layers[l].mor_mode) continue;
    Vector t = t_stats.layers[l].router_assign_fractions();
    Vector r = r_stats.layers[l].router_mean_weights();
    total += double(r_stats.layers[l].n_routers) * kernels::dot(t.data(), r.data(), t.size());
  }
  return total;
}

LossBreakdown assemble_loss(double task, const ActivationStats& stats,
                            const ActivationStats* frozen_assign, double lambda_expert,
                            double lambda_router) {
  if (lambda_expert < 0.0 || lambda_router < 0.0) {
    throw std::invalid_argument("batch loss: lambda coefficients must be >= 0");
  }
  LossBreakdown out;
  out.task = task;
  out.lambda_expert = lambda_expert;
  out.lambda_router = lambda_router;
  if (frozen_assign) {
    out.balance_expert = mixed_balance_expert(stats, *frozen_assign);
    out.balance_router = mixed_balance_router(stats, *frozen_assign);
  } else {
    out.balance_expert = balance_loss(stats);
    out.balance_router = router_balance_loss(stats);
  }
  out.total = task + lambda_expert * out.balance_expert + lambda_router * out.balance_router;
  return out;
}

void check_batch(const Model& model, const Dataset& batch,
                 const std::vector<std::vector<SelectionOverride>>* force) {
  if (batch.empty()) throw std::invalid_argument("batch loss: empty batch");
  if (force && force->size() != batch.size()) {
    throw std::invalid_argument("batch loss: need one override set per sample");
  }
  for (const Sample& s : batch) {
    if (s.x.size() != model.d_in() || s.target.size() != model.d_out()) {
      throw std::invalid_argument("batch loss: sample dims do not match model");
    }
  }
}

void write_raw(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_raw(std::ifstream& in, void* p, std::size_t n, const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw std::runtime_error("dataset cache: truncated file " + path);
  }
}

}  // namespace

// --- optimizer --------------------------------------------------------------

Optimizer::Optimizer(const OptimizerConfig& config, std::size_t n_params)
    : config_(config) {
  if (config.lr < 0.0) throw std::invalid_argument("optimizer: negative learning rate");
  if (config.weight_decay < 0.0) {
    throw std::invalid_argument("optimizer: negative weight decay");
  }
  if (config.kind == OptimizerConfig::Kind::adam) {
    if (config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 ||
        config.beta2 >= 1.0 || config.eps <= 0.0) {
      throw std::invalid_argument("optimizer: adam coefficients out of range");
    }
    m_.assign(n_params, 0.0);
    v_.assign(n_params, 0.0);
  }
}

void Optimizer::step(const std::vector<ParamBlock>& blocks, const Vector& grads) {
  if (grads.size() != param_count(blocks)) {
    throw std::invalid_argument("optimizer: gradient length does not match parameters");
  }
  const double lr = config_.lr;
  const double wd = config_.weight_decay;
  std::size_t offset = 0;
  if (config_.kind == OptimizerConfig::Kind::sgd) {
    for (const ParamBlock& block : blocks) {
      for (std::size_t i = 0; i < block.size; ++i) {
        double p = block.data[i];
        block.data[i] = p - lr * (grads[offset + i] + wd * p);
      }
      offset += block.size;
    }
    return;
  }
  if (grads.size() != m_.size()) {
    throw std::invalid_argument("optimizer: parameter count changed mid-run");
  }
  t_ += 1;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(t_));
  for (const ParamBlock& block : blocks) {
    for (std::size_t i = 0; i < block.size; ++i) {
      const std::size_t j = offset + i;
      const double g = grads[j];
      m_[j] = config_.beta1 * m_[j] + (1.0 - config_.beta1) * g;
      v_[j] = config_.beta2 * v_[j] + (1.0 - config_.beta2) * g * g;
      const double update = (m_[j] / bc1) / (std::sqrt(v_[j] / bc2) + config_.eps);
      const double p = block.data[i];
      block.data[i] = p - lr * (update + wd * p);
    }
    offset += block.size;
  }
}

// --- synthetic task ----------------------------------------------------------

SyntheticTask make_task(const SyntheticTaskSpec& spec, Rng& rng) {
  if (spec.clusters < 1 || spec.d_in < 1 || spec.d_out < 1) {
    throw std::invalid_argument("task spec: counts and dims must be >= 1");
  }
  if (spec.noise_sigma < 0.0 || spec.center_scale <= 0.0) {
    throw std::invalid_argument("task spec: noise_sigma >= 0 and center_scale > 0 required");
  }
  SyntheticTask task;
  task.spec = spec;
  task.centers.reserve(spec.clusters);

  // centers live on a sphere of radius center_scale, rejected until the
  // separability invariant (pairwise distance >= 2) holds
  const int max_tries = 1000 * int(spec.clusters) + 1000;
  int tries = 0;
  while (task.centers.size() < spec.clusters) {
    if (++tries > max_tries) {
      throw std::invalid_argument("task spec: cannot place " +
                                  std::to_string(spec.clusters) +
                                  " centers with pairwise distance >= 2 at scale " +
                                  std::to_string(spec.center_scale));
    }
    Vector c(spec.d_in);
    double norm2 = 0.0;
    for (double& v : c) {
      v = rng.gaussian();
      norm2 += v * v;
    }
    if (norm2 < 1e-12) continue;
    kernels::scale(c.data(), c.size(), spec.center_scale / std::sqrt(norm2));
    bool ok = true;
    for (const Vector& prev : task.centers) ok &= squared_distance(prev, c) >= 4.0;
    if (ok) task.centers.push_back(std::move(c));
  }

  const double gen_scale = 1.0 / std::sqrt(double(spec.d_in));
  for (std::size_t g = 0; g < spec.clusters; ++g) {
    Matrix m(spec.d_out, spec.d_in);
    for (double& v : m.data) v = gen_scale * rng.gaussian();
    task.generators.push_back(std::move(m));
  }
  return task;
}

Dataset sample_dataset(const SyntheticTask& task, std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("dataset: need at least one sample");
  Dataset data;
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.cluster = rng.next_below(task.spec.clusters);
    s.x = task.centers[s.cluster];
    for (double& v : s.x) v += rng.gaussian();
    s.target = matvec(task.generators[s.cluster], s.x);
    if (task.spec.noise_sigma > 0.0) {
      for (double& v : s.target) v += task.spec.noise_sigma * rng.gaussian();
    }
    data.push_back(std::move(s));
  }
  return data;
}

Dataset generate_task(const SyntheticTaskSpec& spec, Rng& rng, std::size_t n) {
  SyntheticTask task = make_task(spec, rng);
  return sample_dataset(task, n, rng);
}

void save_dataset(const std::string& path, const Dataset& data,
                  const SyntheticTaskSpec& spec, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dataset cache: cannot open " + path + " for writing");
  write_raw(out, kDatasetMagic, sizeof(kDatasetMagic));
  std::uint64_t header[4] = {seed, spec.clusters, spec.d_in, spec.d_out};
  write_raw(out, header, sizeof(header));
  double knobs[2] = {spec.noise_sigma, spec.center_scale};
  write_raw(out, knobs, sizeof(knobs));
  std::uint64_t n = data.size();
  write_raw(out, &n, sizeof(n));
  for (const Sample& s : data) {
    std::uint64_t cluster = s.cluster;
    write_raw(out, &cluster, sizeof(cluster));
    write_raw(out, s.x.data(), s.x.size() * sizeof(double));
    write_raw(out, s.target.data(), s.target.size() * sizeof(double));
  }
  if (!out) throw std::runtime_error("dataset cache: write failed for " + path);
}

Dataset load_dataset(const std::string& path, SyntheticTaskSpec* spec_out,
                     std::uint64_t* seed_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("dataset cache: cannot open " + path);
  char magic[8];
  read_raw(in, magic, sizeof(magic), path);
  if (std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("dataset cache: " + path + " is not a dataset file");
  }
  std::uint64_t header[4];
  read_raw(in, header, sizeof(header), path);
  double knobs[2];
  read_raw(in, knobs, sizeof(knobs), path);
  SyntheticTaskSpec spec;
  spec.clusters = header[1];
  spec.d_in = header[2];
  spec.d_out = header[3];
  spec.noise_sigma = knobs[0];
  spec.center_scale = knobs[1];
  if (spec.clusters < 1 || spec.d_in < 1 || spec.d_out < 1) {
    throw std::runtime_error("dataset cache: corrupt header in " + path);
  }
  std::uint64_t n = 0;
  read_raw(in, &n, sizeof(n), path);
  Dataset data;
  data.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Sample s;
    std::uint64_t cluster = 0;
    read_raw(in, &cluster, sizeof(cluster), path);
    if (cluster >= spec.clusters) {
      throw std::runtime_error("dataset cache: corrupt record in " + path);
    }
    s.cluster = cluster;
    s.x.resize(spec.d_in);
    read_raw(in, s.x.data(), spec.d_in * sizeof(double), path);
    s.target.resize(spec.d_out);
    read_raw(in, s.target.data(), spec.d_out * sizeof(double), path);
    data.push_back(std::move(s));
  }
  if (spec_out) *spec_out = spec;
  if (seed_out) *seed_out = header[0];
  return data;
}

// --- batch objective ----------------------------------------------------------

LossBreakdown batch_loss(const Model& model, const Dataset& batch, double lambda_expert,
                         double lambda_router,
                         const std::vector<std::vector<SelectionOverride>>* force,
                         const ActivationStats* frozen_assign) {
  check_batch(model, batch, force);
  ActivationStats stats = make_stats(model);
  double task_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Vector pred = model_forward(model, batch[i].x, &stats, nullptr,
                                force ? &(*force)[i] : nullptr);
    task_sum += task_loss(pred, batch[i].target).value;
  }
  return assemble_loss(task_sum / double(batch.size()), stats, frozen_assign,
                       lambda_expert, lambda_router);
}

BatchGrads batch_gradients(const Model& model, const Dataset& batch, double lambda_expert,
                           double lambda_router,
                           const std::vector<std::vector<SelectionOverride>>* force,
                           const ActivationStats* frozen_assign) {
  check_batch(model, batch, force);
  const std::size_t n = batch.size();
  const double inv_n = 1.0 / double(n);

  BatchGrads out;
  out.stats = make_stats(model);
  std::vector<ModelTrace> traces(n);
  std::vector<TaskLoss> task(n);
  double task_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Vector pred = model_forward(model, batch[i].x, &out.stats, &traces[i],
                                force ? &(*force)[i] : nullptr);
    task[i] = task_loss(pred, batch[i].target);
    task_sum += task[i].value;
  }
  out.loss = assemble_loss(task_sum / double(n), out.stats, frozen_assign, lambda_expert,
                           lambda_router);

  // balance penalties: d/d full_dist = lambda_e * N * t / B per token, with
  // t straight-through; same shape at the router level
  const ActivationStats& t_src = frozen_assign ? *frozen_assign : out.stats;
  std::vector<RoutingUpstream> balance(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const LayerStats& ls = t_src.layers[l];
    if (lambda_expert > 0.0) {
      balance[l].on_full_dist = ls.assign_fractions();
      kernels::scale(balance[l].on_full_dist.data(), ls.n_experts,
                     lambda_expert * double(ls.n_experts) * inv_n);
    }
    if (lambda_router > 0.0 && ls.mor_mode) {
      balance[l].on_router_weights = ls.router_assign_fractions();
      kernels::scale(balance[l].on_router_weights.data(), ls.n_routers,
                     lambda_router * double(ls.n_routers) * inv_n);
    }
  }

  out.grads = zero_grads(model);
  Vector upstream;
  for (std::size_t i = 0; i < n; ++i) {
    upstream = task[i].grad;
    kernels::scale(upstream.data(), upstream.size(), inv_n);
    model_backward(model, traces[i], upstream, balance, out.grads);
  }
  return out;
}

Vector finite_diff_gradient(const std::function<double()>& loss,
                            const std::vector<ParamBlock>& params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite differences: eps must be > 0");
  Vector grad(param_count(params));
  std::size_t offset = 0;
  for (const ParamBlock& block : params) {
    for (std::size_t i = 0; i < block.size; ++i) {
      const double keep = block.data[i];
      block.data[i] = keep + eps;
      const double hi = loss();
      block.data[i] = keep - eps;
      const double lo = loss();
      block.data[i] = keep;
      grad[offset + i] = (hi - lo) / (2.0 * eps);
    }
    offset += block.size;
  }
  return grad;
}

// --- training loop -------------------------------------------------------------

TrainResult train(Model& model, const Dataset& data, const TrainSettings& settings) {
  if (settings.epochs < 1 || settings.batch_size < 1) {
    throw std::invalid_argument("train: epochs and batch_size must be >= 1");
  }
  if (data.empty()) throw std::invalid_argument("train: empty dataset");

  std::vector<ParamBlock> blocks = trainable_params(model);
  Optimizer optimizer(settings.optimizer, param_count(blocks));

  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
    double task_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < data.size(); start += settings.batch_size) {
      const auto t0 = std::chrono::steady_clock::now();
      std::size_t stop = std::min(start + settings.batch_size, data.size());
      Dataset batch(data.begin() + long(start), data.begin() + long(stop));

      BatchGrads bg = batch_gradients(model, batch, settings.lambda_expert,
                                      settings.lambda_router);
      if (!std::isfinite(bg.loss.total)) {
        throw DivergenceError("train: non-finite loss at step " + std::to_string(step) +
                              " (epoch " + std::to_string(epoch) + ")");
      }
      Vector flat = flatten_grads(model, bg.grads);
      optimizer.step(blocks, flat);
      mark_updated(model);

      const double wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      result.log.push_back({step, epoch, bg.loss.task, bg.loss.balance_expert,
                            bg.loss.balance_router, bg.loss.total, wall_ms});
      task_sum += bg.loss.task;
      batches += 1;
      step += 1;
    }
    result.epoch_task_mean.push_back(task_sum / double(batches));
  }

  result.final_stats = make_stats(model);
  result.final_task = mean_task_loss(model, data, &result.final_stats);
  return result;
}

double mean_task_loss(const Model& model, const Dataset& data, ActivationStats* stats) {
  if (data.empty()) throw std::invalid_argument("eval: empty dataset");
  double acc = 0.0;
  for (const Sample& s : data) {
    Vector pred = model_forward(model, s.x, stats, nullptr);
    acc += task_loss(pred, s.target).value;
  }
  return acc / double(data.size());
}

// --- fault injection -------------------------------------------------------------

Model inject_router_fault(const Model& model, const FaultSpec& fault, Rng& rng) {
  if (fault.noise_sigma < 0.0) {
    throw std::invalid_argument("fault: noise_sigma must be >= 0");
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (fault.target_router >= model.layers[l].routers.n_routers()) {
      throw std::invalid_argument("fault: target router " +
                                  std::to_string(fault.target_router) +
                                  " out of range in layer " + std::to_string(l));
    }
  }
  Model faulted = model;
  for (MoeLoraLayer& layer : faulted.layers) {
    Matrix& sub = layer.routers.subs[fault.target_router];
    if (fault.mode == FaultSpec::Mode::weight_zero) {
      for (double& v : sub.data) v = 0.0;
    } else if (fault.noise_sigma > 0.0) {
      for (double& v : sub.data) v += fault.noise_sigma * rng.gaussian();
    }
  }
  mark_updated(faulted);
  return faulted;
}

double selection_agreement(const Model& a, const Model& b,
                           const std::vector<Vector>& inputs) {
  if (a.layers.size() != b.layers.size()) {
    throw std::invalid_argument("selection agreement: layer counts differ");
  }
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].k_experts != b.layers[l].k_experts ||
        a.layers[l].bank.n() != b.layers[l].bank.n()) {
      throw std::invalid_argument("selection agreement: layer shapes differ");
    }
  }
  if (inputs.empty()) throw std::invalid_argument("selection agreement: no inputs");

  double acc = 0.0;
  for (const Vector& x : inputs) {
    ModelTrace ta, tb;
    model_forward(a, x, nullptr, &ta);
    model_forward(b, x, nullptr, &tb);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      const std::vector<std::size_t>& sa = ta.layer_traces[l].cache.decision.selected;
      const std::vector<std::size_t>& sb = tb.layer_traces[l].cache.decision.selected;
      std::size_t overlap = 0;
      for (std::size_t id : sa) {
        for (std::size_t other : sb) overlap += id == other;
      }
      acc += double(overlap) / double(sa.size());
    }
  }
  return acc / (double(inputs.size()) * double(a.layers.size()));
}

}  // namespace mor
