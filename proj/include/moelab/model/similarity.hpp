// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/model/moe_layer.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace moelab::model {

/// Cosine similarity as dot / sqrt(|a|^2 |b|^2). Returns false and leaves
/// `out` untouched when either vector has zero norm.
bool cosine(std::span<const double> a, std::span<const double> b, double& out);

struct PairSimilarity {
    std::size_t expert_a = 0;
    std::size_t expert_b = 0;
    /// Mean over probe tokens of the per-token output cosine.
    double mean_cosine = 0.0;
    std::size_t tokens_used = 0;
    std::size_t tokens_skipped = 0;
    /// Set when any token had a zero-norm output and was left out.
    bool flagged = false;
};

/// Pairwise similarity of routed-expert outputs on the probe tokens. Requires
/// at least two routed experts and one probe token (ArgumentError otherwise).
std::vector<PairSimilarity> expert_output_similarity(const MoELayer& layer, const nk::Matrix& probes);

} // namespace moelab::model
