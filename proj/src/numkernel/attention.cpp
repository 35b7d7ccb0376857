// SPDX-License-Identifier: Apache-2.0
#include "moelab/numkernel/attention.hpp"

#include "moelab/errors.hpp"
#include "moelab/numkernel/ops.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace moelab::nk {

Var mha_forward(Tape& t, Var query, Var key, Var value, std::size_t heads, const AttentionWeights& w)
{
    const std::size_t embed = t.value(w.q_weight).rows();
    if (heads == 0 || embed % heads != 0)
        throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide embed dim " +
                          std::to_string(embed));
    if (t.value(key).rows() != t.value(value).rows())
        throw ShapeError("attention: key and value token counts differ");

    const Var q = linear(t, query, w.q_weight, w.q_bias);
    const Var k = linear(t, key, w.k_weight, w.k_bias);
    const Var v = linear(t, value, w.v_weight, w.v_bias);

    const std::size_t head_dim = embed / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t b = h * head_dim, e = b + head_dim;
        const Var qh = slice_cols(t, q, b, e);
        const Var kh = slice_cols(t, k, b, e);
        const Var vh = slice_cols(t, v, b, e);
        const Var probs = softmax_rows(t, scale(t, matmul_nt(t, qh, kh), inv_sqrt));
        outs.push_back(matmul(t, probs, vh));
    }
    const Var merged = heads == 1 ? outs.front() : concat_cols(t, outs);
    return linear(t, merged, w.out_weight, w.out_bias);
}

} // namespace moelab::nk
