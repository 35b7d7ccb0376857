// SPDX-License-Identifier: Apache-2.0
#include "moelab/precision/bf16.hpp"

#include "moelab/errors.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace moelab::precision {

Bf16Scalar bf16_round(double x) noexcept
{
    if (std::isnan(x))
        return {std::numeric_limits<double>::quiet_NaN()};
    if (std::isinf(x) || x == 0.0)
        return {x};
    const double ax = std::abs(x);
    if (ax < kBf16MinNormal)
        return {std::copysign(0.0, x)};
    int e = 0;
    std::frexp(ax, &e); // ax = m * 2^e, m in [0.5, 1)
    const double spacing = std::ldexp(1.0, e - 1 - 7);
    double q = std::nearbyint(ax / spacing) * spacing;
    if (q > kBf16MaxFinite)
        q = std::numeric_limits<double>::infinity();
    return {std::copysign(q, x)};
}

std::uint16_t bf16_bits(Bf16Scalar v) noexcept
{
    // Grid values convert to float exactly; the top half of the float word is
    // the bfloat16 encoding.
    const auto f = static_cast<float>(v.value);
    return static_cast<std::uint16_t>(std::bit_cast<std::uint32_t>(f) >> 16);
}

Bf16Scalar bf16_from_bits(std::uint16_t bits) noexcept
{
    const float f = std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
    return {static_cast<double>(f)};
}

UlpResult ulp_bf16(double x)
{
    if (!std::isfinite(x))
        throw ArgumentError("ulp_bf16: non-finite input");
    const double ax = std::abs(x);
    if (ax < kBf16MinNormal)
        return {std::ldexp(1.0, -126 - 7), true};
    int e = 0;
    std::frexp(ax, &e);
    return {std::ldexp(1.0, e - 1 - 7), false};
}

double round_wide32(double x) noexcept
{
    return static_cast<double>(static_cast<float>(x));
}

double quantize(double x, nk::NumFormat f) noexcept
{
    switch (f) {
    case nk::NumFormat::wide64: return x;
    case nk::NumFormat::wide32: return round_wide32(x);
    case nk::NumFormat::bf16: return bf16_round(x).value;
    }
    return x;
}

nk::Matrix quantize(const nk::Matrix& m, nk::NumFormat f)
{
    nk::Matrix out = m;
    if (f != nk::NumFormat::wide64)
        for (double& v : out.values())
            v = quantize(v, f);
    out.set_format(f);
    return out;
}

} // namespace moelab::precision
