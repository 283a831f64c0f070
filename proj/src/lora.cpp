// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mor/lora.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mor/kernels.hpp"

namespace mor {

LoraExpertBank make_bank(std::size_t n, std::size_t d_in, std::size_t d_out,
                         std::size_t rank, double alpha, Rng& rng) {
  if (n < 1) throw std::invalid_argument("lora bank: need at least one expert");
  if (rank < 1 || rank > std::min(d_in, d_out)) {
    throw std::invalid_argument("lora bank: rank " + std::to_string(rank) +
                                " outside [1, min(d_in, d_out)]");
  }
  LoraExpertBank bank;
  bank.d_in = d_in;
  bank.d_out = d_out;
  bank.rank = rank;
  bank.experts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    LoraExpert e;
    e.a = init_kaiming(rank, d_in, rng);
    e.b = init_zeros(d_out, rank);
    e.scaling = alpha / double(rank);
    bank.experts.push_back(std::move(e));
  }
  return bank;
}

void validate(const LoraExpertBank& bank) {
  if (bank.experts.empty()) throw std::invalid_argument("lora bank: empty");
  for (const LoraExpert& e : bank.experts) {
    if (e.a.rows != bank.rank || e.a.cols != bank.d_in || e.b.rows != bank.d_out ||
        e.b.cols != bank.rank) {
      throw std::invalid_argument("lora bank: expert shape mismatch");
    }
    if (!(e.scaling > 0.0)) throw std::invalid_argument("lora bank: scaling must be > 0");
  }
}

namespace {

void check_expert_args(const LoraExpertBank& bank, std::size_t i, std::size_t x_len) {
  if (i >= bank.n()) {
    throw std::invalid_argument("lora bank: expert index " + std::to_string(i) +
                                " out of range for " + std::to_string(bank.n()));
  }
  if (x_len != bank.d_in) {
    throw std::invalid_argument("lora bank: input length " + std::to_string(x_len) +
                                " != d_in " + std::to_string(bank.d_in));
  }
}

}  // namespace

Vector expert_forward(const LoraExpertBank& bank, std::size_t i, const Vector& x) {
  check_expert_args(bank, i, x.size());
  const LoraExpert& e = bank.experts[i];
  Vector u(bank.rank);
  kernels::matvec(e.a.data.data(), bank.rank, bank.d_in, x.data(), u.data());
  Vector y(bank.d_out);
  kernels::matvec(e.b.data.data(), bank.d_out, bank.rank, u.data(), y.data());
  kernels::scale(y.data(), y.size(), e.scaling);
  return y;
}

Vector weighted_expert_delta(const LoraExpertBank& bank, const RoutingDecision& decision,
                             const Vector& x) {
  if (decision.selected.size() != decision.weights.size() || decision.selected.empty()) {
    throw std::invalid_argument("weighted_expert_delta: malformed decision");
  }
  double s = kernels::sum(decision.weights.data(), decision.weights.size());
  if (std::abs(s - 1.0) > 1e-9) {
    throw std::invalid_argument("weighted_expert_delta: weights sum to " + std::to_string(s));
  }
  Vector out(bank.d_out, 0.0);
  Vector u(bank.rank);
  Vector y(bank.d_out);
  for (std::size_t j = 0; j < decision.selected.size(); ++j) {
    std::size_t i = decision.selected[j];
    check_expert_args(bank, i, x.size());
    const LoraExpert& e = bank.experts[i];
    kernels::matvec(e.a.data.data(), bank.rank, bank.d_in, x.data(), u.data());
    kernels::matvec(e.b.data.data(), bank.d_out, bank.rank, u.data(), y.data());
    kernels::axpy(decision.weights[j] * e.scaling, y.data(), out.data(), bank.d_out);
  }
  return out;
}

ExpertGrads expert_param_grads(const LoraExpertBank& bank, std::size_t i, const Vector& x,
                               const Vector& upstream) {
  check_expert_args(bank, i, x.size());
  if (upstream.size() != bank.d_out) {
    throw std::invalid_argument("expert_param_grads: upstream length " +
                                std::to_string(upstream.size()) + " != d_out " +
                                std::to_string(bank.d_out));
  }
  const LoraExpert& e = bank.experts[i];
  ExpertGrads g;
  g.d_a = Matrix(bank.rank, bank.d_in);
  g.d_b = Matrix(bank.d_out, bank.rank);

  Vector ax(bank.rank);
  kernels::matvec(e.a.data.data(), bank.rank, bank.d_in, x.data(), ax.data());
  kernels::outer_accum(e.scaling, upstream.data(), bank.d_out, ax.data(), bank.rank,
                       g.d_b.data.data());

  Vector bt_up(bank.rank, 0.0);
  kernels::matvec_t_accum(e.b.data.data(), bank.d_out, bank.rank, upstream.data(),
                          bt_up.data());
  kernels::outer_accum(e.scaling, bt_up.data(), bank.rank, x.data(), bank.d_in,
                       g.d_a.data.data());
  return g;
}

void expert_input_grad_accum(const LoraExpertBank& bank, std::size_t i,
                             const Vector& upstream, Vector& dx) {
  check_expert_args(bank, i, dx.size());
  const LoraExpert& e = bank.experts[i];
  Vector bt_up(bank.rank, 0.0);
  kernels::matvec_t_accum(e.b.data.data(), bank.d_out, bank.rank, upstream.data(),
                          bt_up.data());
  Vector scaled(bank.d_in, 0.0);
  kernels::matvec_t_accum(e.a.data.data(), bank.rank, bank.d_in, bt_up.data(),
                          scaled.data());
  kernels::axpy(e.scaling, scaled.data(), dx.data(), bank.d_in);
}

}  // namespace mor
