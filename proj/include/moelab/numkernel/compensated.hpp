// SPDX-License-Identifier: Apache-2.0
#pragma once

// Error-free transformations and a small double-double type. Correct results
// require strict IEEE evaluation (no contraction into fused multiply-add), which
// the build enforces with -ffp-contract=off.

namespace moelab::nk {

struct DoubleDouble {
    double hi = 0.0;
    double lo = 0.0;
};

inline DoubleDouble two_sum(double a, double b) noexcept
{
    const double s = a + b;
    const double bb = s - a;
    const double err = (a - (s - bb)) + (b - bb);
    return {s, err};
}

inline DoubleDouble fast_two_sum(double a, double b) noexcept
{
    const double s = a + b;
    return {s, b - (s - a)};
}

// Veltkamp split followed by Dekker's product.
inline DoubleDouble two_prod(double a, double b) noexcept
{
    constexpr double splitter = 134217729.0; // 2^27 + 1
    const double p = a * b;
    const double ca = splitter * a;
    const double ahi = ca - (ca - a);
    const double alo = a - ahi;
    const double cb = splitter * b;
    const double bhi = cb - (cb - b);
    const double blo = b - bhi;
    const double err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo;
    return {p, err};
}

inline DoubleDouble dd_add(DoubleDouble a, DoubleDouble b) noexcept
{
    DoubleDouble s = two_sum(a.hi, b.hi);
    DoubleDouble t = two_sum(a.lo, b.lo);
    s.lo += t.hi;
    s = fast_two_sum(s.hi, s.lo);
    s.lo += t.lo;
    return fast_two_sum(s.hi, s.lo);
}

inline DoubleDouble dd_mul(DoubleDouble a, double b) noexcept
{
    DoubleDouble p = two_prod(a.hi, b);
    p.lo += a.lo * b;
    return fast_two_sum(p.hi, p.lo);
}

/// Quotient of two double-doubles rounded to double. One Newton correction on
/// top of the leading quotient; when the exact quotient is a double, that
/// double is returned.
inline double dd_div_to_double(DoubleDouble num, DoubleDouble den) noexcept
{
    const double q0 = num.hi / den.hi;
    // r = num - q0 * den, kept in double-double
    DoubleDouble prod = dd_mul(den, q0);
    DoubleDouble r = dd_add(num, DoubleDouble{-prod.hi, -prod.lo});
    const double q1 = (r.hi + r.lo) / den.hi;
    return q0 + q1;
}

} // namespace moelab::nk
