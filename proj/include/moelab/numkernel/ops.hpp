// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/numkernel/tape.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace moelab::nk {

// Scalar helpers shared with tests and oracles.
double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

/// Numerically stable softmax of one row (max subtracted before exp).
std::vector<double> softmax(std::span<const double> row);

struct TopK {
    std::vector<std::size_t> indices;
    std::vector<double> values;
};

/// k largest entries in descending order; equal values resolve to the lowest
/// index first. Throws ArgumentError when k exceeds the row length.
TopK topk(std::span<const double> row, std::size_t k);

// Differentiable operations. All shapes are checked and mismatches throw
// ShapeError.
Var matmul(Tape& t, Var a, Var b);
Var matmul_nt(Tape& t, Var a, Var b);                           // a * b^T
Var linear(Tape& t, Var x, Var weight, std::optional<Var> bias); // x W^T + b, W is (out x in)
Var transpose(Tape& t, Var a);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var a, Var row);   // row is 1 x cols, broadcast down
Var scale(Tape& t, Var a, double s);
Var hadamard(Tape& t, Var a, Var b);
Var scale_rows(Tape& t, Var a, Var col); // a[i, :] * col[i], col is rows x 1
Var gelu(Tape& t, Var x);
Var softmax_rows(Tape& t, Var x);
Var normalize_rows(Tape& t, Var a, double eps); // a[i, :] / (sum_j a[i, j] + eps)
Var sum(Tape& t, Var a);                        // 1 x 1
Var mean_rows(Tape& t, Var a);                  // 1 x cols, mean over rows
Var mse(Tape& t, Var pred, Var target);         // 1 x 1, mean squared difference
Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t end);
Var slice_rows(Tape& t, Var a, std::size_t begin, std::size_t end);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var gather_rows(Tape& t, Var a, std::span<const std::size_t> rows);
/// (n x cols) matrix holding row k of `a` at position rows[k], zeros elsewhere.
Var scatter_rows(Tape& t, Var a, std::span<const std::size_t> rows, std::size_t n);

} // namespace moelab::nk
