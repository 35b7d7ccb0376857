// SPDX-License-Identifier: Apache-2.0
#include "moelab/numkernel/grad_check.hpp"

#include "moelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace moelab::nk {

namespace {

double checked(double v, std::size_t coord)
{
    if (!std::isfinite(v))
        throw EvaluationError("grad_check: non-finite function value near coordinate " + std::to_string(coord));
    return v;
}

} // namespace

GradCheckResult grad_check(const ScalarFn& fn, std::span<const double> point, double step)
{
    if (!(step > 0.0))
        throw ArgumentError("grad_check: step must be positive");
    GradCheckResult r;
    checked(fn(point, &r.analytic), 0);
    if (r.analytic.size() != point.size())
        throw ArgumentError("grad_check: analytic gradient has wrong length");

    std::vector<double> x(point.begin(), point.end());
    r.numeric.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double fp = checked(fn(x, nullptr), i);
        x[i] = orig - step;
        const double fm = checked(fn(x, nullptr), i);
        x[i] = orig;
        r.numeric[i] = (fp - fm) / (2.0 * step);
    }

    double scale = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        scale = std::max({scale, std::abs(r.analytic[i]), std::abs(r.numeric[i])});
    const double floor = std::max(1e-5 * scale, 1e-12);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = r.analytic[i], n = r.numeric[i];
        const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
        if (err > r.max_rel_error) {
            r.max_rel_error = err;
            r.worst_index = i;
        }
    }
    return r;
}

} // namespace moelab::nk
