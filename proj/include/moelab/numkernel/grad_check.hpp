// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace moelab::nk {

/// Scalar function of a flat parameter vector. When `grad` is non-null the
/// callee writes the analytic gradient into it (resized to the point's size).
using ScalarFn = std::function<double(std::span<const double> point, std::vector<double>* grad)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

/// Central-difference check of `fn`'s analytic gradient at `point`.
///
/// Per coordinate the error is |a - n| / max(|a|, |n|, floor) where the floor is
/// 1e-5 of the largest gradient magnitude (and never below 1e-12), so
/// coordinates that are numerically zero relative to the gradient's scale do
/// not dominate through round-off. Throws EvaluationError on a non-finite
/// function value and ArgumentError for a non-positive step.
GradCheckResult grad_check(const ScalarFn& fn, std::span<const double> point, double step = 1e-5);

} // namespace moelab::nk
