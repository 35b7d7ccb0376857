// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/numkernel/tape.hpp"
#include "moelab/routing/gate.hpp"

#include <cstddef>
#include <optional>
#include <span>

namespace moelab::routing {

// Load-balancing loss, alpha * sum_e P_e * f_e, where P_e is the mean score of
// expert e and f_e = E * (share of (token, slot) selections landing on e).
// Both forms return nullopt when alpha is 0. `topk_idx` is (tokens x top_k)
// row-major; top_k is inferred from its length.

std::optional<double> aux_loss_global(const nk::Matrix& scores, std::span<const std::size_t> topk_idx, double alpha,
                                      std::size_t n_experts);

/// Per-sequence variant: selection counts per sequence are normalized by
/// seq_len * top_k / E, dotted with that sequence's mean scores, then averaged
/// over the batch.
std::optional<double> aux_loss_seq(const nk::Matrix& scores, std::span<const std::size_t> topk_idx, double alpha,
                                   std::size_t n_experts, BatchShape shape);

// Differentiable counterparts; the gradient flows through the scores only.
nk::Var aux_loss_global(nk::Tape& t, nk::Var scores, std::span<const std::size_t> topk_idx, double alpha,
                        std::size_t n_experts);
nk::Var aux_loss_seq(nk::Tape& t, nk::Var scores, std::span<const std::size_t> topk_idx, double alpha,
                     std::size_t n_experts, BatchShape shape);

} // namespace moelab::routing
