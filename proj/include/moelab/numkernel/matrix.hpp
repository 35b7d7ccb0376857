// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace moelab::nk {

/// Numeric format a matrix's values are known to lie on. Storage is always
/// double; the tag records which grid the values were last rounded to.
enum class NumFormat { wide64, wide32, bf16 };

std::string_view to_string(NumFormat f);
NumFormat parse_num_format(std::string_view s);

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix row_vector(std::span<const double> values);
    static Matrix zeros_like(const Matrix& m) { return Matrix(m.rows(), m.cols()); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    NumFormat format() const noexcept { return format_; }
    void set_format(NumFormat f) noexcept { format_ = f; }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const noexcept;

    /// Bitwise comparison of shape and values (format tag ignored).
    bool identical(const Matrix& o) const noexcept;

    void fill(double v) noexcept;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
    NumFormat format_ = NumFormat::wide64;
};

// Plain (tape-free) kernels. Every product accumulates over the inner index in
// ascending order, so results match a naive triple loop bit-for-bit.
Matrix gemm(const Matrix& a, const Matrix& b);
Matrix gemm_nt(const Matrix& a, const Matrix& b); // a * b^T
Matrix gemm_tn(const Matrix& a, const Matrix& b); // a^T * b
Matrix transpose(const Matrix& a);

double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

} // namespace moelab::nk
