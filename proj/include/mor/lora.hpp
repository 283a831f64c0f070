// Copyright (c) 2026 The mor-kit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bank of low-rank adapters acting as experts. Each expert is a pair
// (A: rank x d_in, B: d_out x rank) applied as scaling * B(Ax), with A
// random at construction and B zero so a fresh adapter is a no-op.

#pragma once

#include <vector>

#include "mor/numeric.hpp"
#include "mor/routing.hpp"

namespace mor {

struct LoraExpert {
  Matrix a;        // rank x d_in
  Matrix b;        // d_out x rank
  double scaling;  // alpha / rank
};

struct LoraExpertBank {
  std::vector<LoraExpert> experts;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t rank = 0;

  std::size_t n() const { return experts.size(); }
};

/// n experts with A kaiming-initialized and B zero; scaling = alpha / rank.
/// rank must satisfy 1 <= rank <= min(d_in, d_out).
LoraExpertBank make_bank(std::size_t n, std::size_t d_in, std::size_t d_out,
                         std::size_t rank, double alpha, Rng& rng);

/// Throws std::invalid_argument when bank fields are inconsistent.
void validate(const LoraExpertBank& bank);

/// scaling * B_i (A_i x); length d_out.
Vector expert_forward(const LoraExpertBank& bank, std::size_t i, const Vector& x);

/// Weighted sum of the selected experts' outputs; only they are evaluated.
Vector weighted_expert_delta(const LoraExpertBank& bank, const RoutingDecision& decision,
                             const Vector& x);

struct ExpertGrads {
  Matrix d_a;
  Matrix d_b;
};

/// dL/dB_i = scaling * upstream (A_i x)^T, dL/dA_i = scaling * (B_i^T upstream) x^T.
ExpertGrads expert_param_grads(const LoraExpertBank& bank, std::size_t i, const Vector& x,
                               const Vector& upstream);

/// dx += scaling * A_i^T (B_i^T upstream); shared by the layer backward.
void expert_input_grad_accum(const LoraExpertBank& bank, std::size_t i,
                             const Vector& upstream, Vector& dx);

}  // namespace mor
