// SPDX-License-Identifier: Apache-2.0
// Small hand-checkable inputs shared by the unit tests and the acceptance binary.
#pragma once

#include "moelab/numkernel/matrix.hpp"

#include <cstdint>
#include <vector>

namespace fixtures {

// Two experts, one token per bit of `pattern` (bit i set routes token i to
// expert 1). Each token's selected expert scores `confidence`, the other
// 1 - confidence, so scores agree with the selection.
struct TwoExpertBatch {
    moelab::nk::Matrix scores;
    std::vector<std::size_t> topk_idx;
};

inline TwoExpertBatch two_expert_batch(std::uint32_t pattern, std::size_t tokens, double confidence)
{
    TwoExpertBatch b{moelab::nk::Matrix(tokens, 2), {}};
    for (std::size_t i = 0; i < tokens; ++i) {
        const std::size_t e = (pattern >> i) & 1u;
        b.topk_idx.push_back(e);
        b.scores(i, e) = confidence;
        b.scores(i, 1 - e) = 1.0 - confidence;
    }
    return b;
}

// Expert-0 selections of a pattern.
inline std::size_t expert0_count(std::uint32_t pattern, std::size_t tokens)
{
    std::size_t c = 0;
    for (std::size_t i = 0; i < tokens; ++i)
        c += ((pattern >> i) & 1u) == 0 ? 1 : 0;
    return c;
}

} // namespace fixtures
