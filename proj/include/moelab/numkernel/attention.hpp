// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/numkernel/tape.hpp"

#include <cstddef>

namespace moelab::nk {

/// Projection parameters of a multi-head attention block. Query and output
/// projections are (embed x embed); key and value projections are
/// (embed x kdim) and (embed x vdim) so keys/values may come from a source with
/// a different width. Biases are 1 x embed.
struct AttentionWeights {
    Var q_weight, q_bias;
    Var k_weight, k_bias;
    Var v_weight, v_bias;
    Var out_weight, out_bias;
};

/// Scaled dot-product attention with `heads` heads. `query` is (n x embed),
/// `key` is (m x kdim), `value` is (m x vdim). Returns (n x embed).
/// Throws ConfigError when `heads` does not divide the embedding width.
Var mha_forward(Tape& t, Var query, Var key, Var value, std::size_t heads, const AttentionWeights& w);

} // namespace moelab::nk
