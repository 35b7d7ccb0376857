// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/numkernel/matrix.hpp"

#include <cstdint>

namespace moelab::precision {

/// A real value lying exactly on the bfloat16 grid (1 sign, 8 exponent and 7
/// stored mantissa bits), held as a double. Subnormals are flushed to zero.
struct Bf16Scalar {
    double value = 0.0;

    friend bool operator==(Bf16Scalar, Bf16Scalar) = default;
};

inline constexpr double kBf16MinNormal = 0x1p-126;
inline constexpr double kBf16MaxFinite = 0x1.fep127; // (2 - 2^-7) * 2^127

/// Round-to-nearest-even onto the bfloat16 grid. NaN propagates; magnitudes
/// below the smallest normal flush to a signed zero; overflow goes to infinity.
Bf16Scalar bf16_round(double x) noexcept;

/// 16-bit encoding of a grid value, and back.
std::uint16_t bf16_bits(Bf16Scalar v) noexcept;
Bf16Scalar bf16_from_bits(std::uint16_t bits) noexcept;

struct UlpResult {
    double ulp = 0.0;
    /// Set for zero or subnormal input; `ulp` then holds the spacing of the
    /// smallest normal binade.
    bool flagged = false;
};

/// Spacing of the bfloat16 grid at |x|: 2^(floor(log2|x|) - 7).
/// Throws ArgumentError for non-finite input.
UlpResult ulp_bf16(double x);

/// Nearest float32 value (round-to-nearest-even).
double round_wide32(double x) noexcept;

double quantize(double x, nk::NumFormat f) noexcept;
nk::Matrix quantize(const nk::Matrix& m, nk::NumFormat f);

} // namespace moelab::precision
