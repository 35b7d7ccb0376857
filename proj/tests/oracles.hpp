// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations used by the unit and acceptance tests.
#pragma once

#include "moelab/numkernel/matrix.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using moelab::nk::Matrix;

// Textbook i-j-k product, inner index ascending.
inline Matrix naive_matmul(const Matrix& a, const Matrix& b)
{
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k)
                s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

inline Matrix naive_transpose(const Matrix& a)
{
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            t(j, i) = a(i, j);
    return t;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> d(0.0, scale);
    Matrix m(r, c);
    for (double& v : m.values())
        v = d(rng);
    return m;
}

// GELU through erfc in extended precision.
inline double gelu_ref(double x)
{
    const long double lx = x;
    return static_cast<double>(0.5L * lx * std::erfc(-lx / std::sqrt(2.0L)));
}

// Every positive finite bfloat16 value, ascending, taken from the bit patterns.
inline const std::vector<double>& bf16_positive_grid()
{
    static const std::vector<double> grid = [] {
        std::vector<double> g;
        for (std::uint32_t bits = 0x0080; bits < 0x7f80; ++bits)
            g.push_back(static_cast<double>(std::bit_cast<float>(bits << 16)));
        return g;
    }();
    return grid;
}

// Nearest grid value by search; ties go to the even encoding.
inline double bf16_nearest(double x)
{
    if (std::isnan(x))
        return x;
    const auto& g = bf16_positive_grid();
    const double ax = std::abs(x);
    if (ax < g.front())
        return std::copysign(0.0, x);
    const double top = g.back();
    const double half_step = std::ldexp(1.0, 127 - 8);
    if (ax >= top + half_step)
        return std::copysign(INFINITY, x);
    auto hi = std::lower_bound(g.begin(), g.end(), ax);
    if (hi == g.end())
        return std::copysign(top, x);
    if (*hi == ax || hi == g.begin())
        return std::copysign(*hi, x);
    auto lo = hi - 1;
    const double dlo = ax - *lo;
    const double dhi = *hi - ax;
    double pick;
    if (dlo < dhi)
        pick = *lo;
    else if (dhi < dlo)
        pick = *hi;
    else {
        const auto bits_lo = std::bit_cast<std::uint32_t>(static_cast<float>(*lo)) >> 16;
        pick = (bits_lo & 1u) == 0 ? *lo : *hi;
    }
    return std::copysign(pick, x);
}

// Central differences of f over a flat vector.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-5)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double fp = f(x);
        x[i] = keep - h;
        const double fm = f(x);
        x[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Same central difference, but `delta(xp, xm)` returns f(xp) - f(xm) directly
// so the caller can subtract before reducing.
inline std::vector<double>
central_diff_by(const std::function<double(const std::vector<double>&, const std::vector<double>&)>& delta,
                std::vector<double> x, double h = 1e-5)
{
    std::vector<double> g(x.size());
    std::vector<double> xm = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        xm[i] = keep - h;
        g[i] = delta(x, xm) / (2.0 * h);
        x[i] = keep;
        xm[i] = keep;
    }
    return g;
}

// max_i |a - n| / max(|a|, |n|, floor), floor = 1e-5 * max|a| (>= 1e-12).
inline double max_rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric)
{
    double scale = 0.0;
    for (double v : analytic)
        scale = std::max(scale, std::abs(v));
    const double floor = std::max(1e-5 * scale, 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double d = std::abs(analytic[i] - numeric[i]);
        worst = std::max(worst, d / std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor}));
    }
    return worst;
}

} // namespace oracle
