// SPDX-License-Identifier: Apache-2.0
#include "moelab/numkernel/matrix.hpp"

#include "moelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace moelab::nk {

std::string_view to_string(NumFormat f)
{
    switch (f) {
    case NumFormat::wide64: return "wide64";
    case NumFormat::wide32: return "wide32";
    case NumFormat::bf16: return "bf16";
    }
    return "wide64";
}

NumFormat parse_num_format(std::string_view s)
{
    if (s == "wide64" || s == "float64") return NumFormat::wide64;
    if (s == "wide32" || s == "float32") return NumFormat::wide32;
    if (s == "bf16" || s == "bfloat16") return NumFormat::bf16;
    throw ConfigError("unknown numeric format '" + std::string(s) + "'");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data))
{
    if (data_.size() != rows * cols)
        throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows)
{
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c)
            throw ShapeError("ragged initializer for matrix");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const double> values)
{
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

bool Matrix::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Matrix::identical(const Matrix& o) const noexcept
{
    return same_shape(o) &&
           (data_.empty() || std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0);
}

void Matrix::fill(double v) noexcept
{
    std::fill(data_.begin(), data_.end(), v);
}

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 16;

using Lane8 = double __attribute__((vector_size(64)));

// Left operand element (r, k) lives at a[r * rs + k * ks].
void gemm_full_tile(const double* __restrict a, std::size_t rs, std::size_t ks, const double* __restrict b,
                    double* __restrict c, std::size_t inner, std::size_t ldb)
{
    Lane8 acc[kTileRows][2] = {};
    for (std::size_t k = 0; k < inner; ++k) {
        Lane8 b0, b1;
        std::memcpy(&b0, b + k * ldb, sizeof b0);
        std::memcpy(&b1, b + k * ldb + 8, sizeof b1);
        for (std::size_t r = 0; r < kTileRows; ++r) {
            const double s = a[r * rs + k * ks];
            acc[r][0] += s * b0;
            acc[r][1] += s * b1;
        }
    }
    for (std::size_t r = 0; r < kTileRows; ++r) {
        std::memcpy(c + r * ldb, &acc[r][0], sizeof acc[r][0]);
        std::memcpy(c + r * ldb + 8, &acc[r][1], sizeof acc[r][1]);
    }
}

void gemm_edge_tile(const double* __restrict a, std::size_t rs, std::size_t ks, const double* __restrict b,
                    double* __restrict c, std::size_t inner, std::size_t ldb, std::size_t rows, std::size_t cols)
{
    for (std::size_t r = 0; r < rows; ++r) {
        double* out = c + r * ldb;
        for (std::size_t k = 0; k < inner; ++k) {
            const double s = a[r * rs + k * ks];
            const double* br = b + k * ldb;
            for (std::size_t j = 0; j < cols; ++j)
                out[j] += s * br[j];
        }
    }
}

// c (n x m) = op(a) * b with b stored (inner x m).
Matrix gemm_strided(const double* pa, std::size_t rs, std::size_t ks, std::size_t n, std::size_t inner,
                    const Matrix& b)
{
    const std::size_t m = b.cols();
    Matrix c(n, m);
    const double* pb = b.values().data();
    double* pc = c.values().data();
    // Register tiles; each output still sums its k terms in ascending order.
    std::size_t i = 0;
    for (; i + kTileRows <= n; i += kTileRows) {
        std::size_t j = 0;
        for (; j + kTileCols <= m; j += kTileCols)
            gemm_full_tile(pa + i * rs, rs, ks, pb + j, pc + i * m + j, inner, m);
        if (j < m)
            gemm_edge_tile(pa + i * rs, rs, ks, pb + j, pc + i * m + j, inner, m, kTileRows, m - j);
    }
    if (i < n)
        gemm_edge_tile(pa + i * rs, rs, ks, pb, pc + i * m, inner, m, n - i, m);
    return c;
}

} // namespace

Matrix gemm(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    return gemm_strided(a.values().data(), a.cols(), 1, a.rows(), a.cols(), b);
}

Matrix transpose(const Matrix& a)
{
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            t(j, i) = a(i, j);
    return t;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b)
{
    return gemm(a, transpose(b));
}

Matrix gemm_tn(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows())
        throw ShapeError("matmul: (" + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ")^T * " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    return gemm_strided(a.values().data(), 1, a.cols(), a.cols(), a.rows(), b);
}

double frobenius_norm(const Matrix& m)
{
    double s = 0.0;
    for (double v : m.values())
        s += v * v;
    return std::sqrt(s);
}

double max_abs_diff(const Matrix& a, const Matrix& b)
{
    if (!a.same_shape(b))
        throw ShapeError("max_abs_diff: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
    return worst;
}

} // namespace moelab::nk
