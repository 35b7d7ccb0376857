// SPDX-License-Identifier: Apache-2.0
#include "moelab/numkernel/ops.hpp"

#include "moelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace moelab::nk {

namespace {

std::string shape_str(const Matrix& m)
{
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op)
{
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

} // namespace

double gelu(double x) noexcept
{
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_derivative(double x) noexcept
{
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

std::vector<double> softmax(std::span<const double> row)
{
    std::vector<double> out(row.size());
    if (row.empty())
        return out;
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        out[j] = std::exp(row[j] - mx);
        s += out[j];
    }
    for (double& v : out)
        v /= s;
    return out;
}

TopK topk(std::span<const double> row, std::size_t k)
{
    if (k > row.size())
        throw ArgumentError("topk: k=" + std::to_string(k) + " exceeds length " + std::to_string(row.size()));
    std::vector<std::size_t> order(row.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    TopK r;
    r.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t i : r.indices)
        r.values.push_back(row[i]);
    return r;
}

Var matmul(Tape& t, Var a, Var b)
{
    Matrix out = gemm(t.value(a), t.value(b));
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a))
            tp.accumulate(a, gemm_nt(g, tp.value(b)));
        if (tp.requires_grad(b))
            tp.accumulate(b, gemm_tn(tp.value(a), g));
    });
}

Var matmul_nt(Tape& t, Var a, Var b)
{
    Matrix out = gemm_nt(t.value(a), t.value(b));
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a))
            tp.accumulate(a, gemm(g, tp.value(b)));
        if (tp.requires_grad(b))
            tp.accumulate(b, gemm_tn(g, tp.value(a)));
    });
}

Var linear(Tape& t, Var x, Var weight, std::optional<Var> bias)
{
    if (t.value(x).cols() != t.value(weight).cols())
        throw ShapeError("linear: input " + shape_str(t.value(x)) + " vs weight " + shape_str(t.value(weight)));
    Var y = matmul_nt(t, x, weight);
    if (bias)
        y = add_row(t, y, *bias);
    return y;
}

Var transpose(Tape& t, Var a)
{
    return t.record(transpose(t.value(a)), {a}, [a](Tape& tp, const Matrix& g) { tp.accumulate(a, transpose(g)); });
}

Var add(Tape& t, Var a, Var b)
{
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    require_same_shape(av, bv, "add");
    Matrix out = av;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values()[i] += bv.values()[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        tp.accumulate(b, g);
    });
}

Var sub(Tape& t, Var a, Var b)
{
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    require_same_shape(av, bv, "sub");
    Matrix out = av;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values()[i] -= bv.values()[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(b)) {
            Matrix ng = g;
            for (double& v : ng.values())
                v = -v;
            tp.accumulate(b, std::move(ng));
        }
    });
}

Var add_row(Tape& t, Var a, Var row)
{
    const Matrix& av = t.value(a);
    const Matrix& rv = t.value(row);
    if (rv.rows() != 1 || rv.cols() != av.cols())
        throw ShapeError("add_row: " + shape_str(av) + " + " + shape_str(rv));
    Matrix out = av;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j)
            r[j] += rv(0, j);
    }
    return t.record(std::move(out), {a, row}, [a, row](Tape& tp, const Matrix& g) {
        tp.accumulate(a, g);
        if (tp.requires_grad(row)) {
            Matrix s(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j)
                    s(0, j) += g(i, j);
            tp.accumulate(row, std::move(s));
        }
    });
}

Var scale(Tape& t, Var a, double s)
{
    Matrix out = t.value(a);
    for (double& v : out.values())
        v *= s;
    return t.record(std::move(out), {a}, [a, s](Tape& tp, const Matrix& g) {
        Matrix sg = g;
        for (double& v : sg.values())
            v *= s;
        tp.accumulate(a, std::move(sg));
    });
}

Var hadamard(Tape& t, Var a, Var b)
{
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    require_same_shape(av, bv, "hadamard");
    Matrix out = av;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values()[i] *= bv.values()[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (tp.requires_grad(a)) {
            Matrix ga = g;
            const auto bvals = tp.value(b).values();
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga.values()[i] *= bvals[i];
            tp.accumulate(a, std::move(ga));
        }
        if (tp.requires_grad(b)) {
            Matrix gb = g;
            const auto avals = tp.value(a).values();
            for (std::size_t i = 0; i < gb.size(); ++i)
                gb.values()[i] *= avals[i];
            tp.accumulate(b, std::move(gb));
        }
    });
}

Var scale_rows(Tape& t, Var a, Var col)
{
    const Matrix& av = t.value(a);
    const Matrix& cv = t.value(col);
    if (cv.cols() != 1 || cv.rows() != av.rows())
        throw ShapeError("scale_rows: " + shape_str(av) + " by " + shape_str(cv));
    Matrix out = av;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (double& v : out.row(i))
            v *= cv(i, 0);
    return t.record(std::move(out), {a, col}, [a, col](Tape& tp, const Matrix& g) {
        const Matrix& avv = tp.value(a);
        const Matrix& cvv = tp.value(col);
        if (tp.requires_grad(a)) {
            Matrix ga = g;
            for (std::size_t i = 0; i < ga.rows(); ++i)
                for (double& v : ga.row(i))
                    v *= cvv(i, 0);
            tp.accumulate(a, std::move(ga));
        }
        if (tp.requires_grad(col)) {
            Matrix gc(cvv.rows(), 1);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < g.cols(); ++j)
                    s += g(i, j) * avv(i, j);
                gc(i, 0) = s;
            }
            tp.accumulate(col, std::move(gc));
        }
    });
}

Var gelu(Tape& t, Var x)
{
    Matrix out = t.value(x);
    std::vector<double> erfs(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double& v = out.values()[i];
        erfs[i] = std::erf(v / std::numbers::sqrt2);
        v = 0.5 * v * (1.0 + erfs[i]);
    }
    return t.record(std::move(out), {x}, [x, erfs = std::move(erfs)](Tape& tp, const Matrix& g) {
        Matrix gx = g;
        const auto xv = tp.value(x).values();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            // Same expression as gelu_derivative with the forward erf reused.
            const double cdf = 0.5 * (1.0 + erfs[i]);
            const double pdf = std::exp(-0.5 * xv[i] * xv[i]) / std::sqrt(2.0 * std::numbers::pi);
            gx.values()[i] *= cdf + xv[i] * pdf;
        }
        tp.accumulate(x, std::move(gx));
    });
}

Var softmax_rows(Tape& t, Var x)
{
    const Matrix& xv = t.value(x);
    Matrix out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        const auto p = softmax(xv.row(i));
        std::copy(p.begin(), p.end(), out.row(i).begin());
    }
    Matrix p = out;
    return t.record(std::move(out), {x}, [x, p = std::move(p)](Tape& tp, const Matrix& g) {
        Matrix gx(p.rows(), p.cols());
        for (std::size_t i = 0; i < p.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < p.cols(); ++j)
                dot += g(i, j) * p(i, j);
            for (std::size_t j = 0; j < p.cols(); ++j)
                gx(i, j) = p(i, j) * (g(i, j) - dot);
        }
        tp.accumulate(x, std::move(gx));
    });
}

Var normalize_rows(Tape& t, Var a, double eps)
{
    const Matrix& av = t.value(a);
    Matrix out = av;
    Matrix denom(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double s = 0.0;
        for (double v : av.row(i))
            s += v;
        denom(i, 0) = s + eps;
        for (double& v : out.row(i))
            v /= denom(i, 0);
    }
    Matrix outv = out;
    return t.record(std::move(out), {a}, [a, denom, outv](Tape& tp, const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j)
                dot += g(i, j) * outv(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j)
                ga(i, j) = (g(i, j) - dot) / denom(i, 0);
        }
        tp.accumulate(a, std::move(ga));
    });
}

Var sum(Tape& t, Var a)
{
    double s = 0.0;
    for (double v : t.value(a).values())
        s += v;
    return t.record(Matrix(1, 1, s), {a}, [a](Tape& tp, const Matrix& g) {
        const Matrix& av = tp.value(a);
        tp.accumulate(a, Matrix(av.rows(), av.cols(), g(0, 0)));
    });
}

Var mean_rows(Tape& t, Var a)
{
    const Matrix& av = t.value(a);
    if (av.rows() == 0)
        throw ShapeError("mean_rows: empty input");
    Matrix out(1, av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < av.cols(); ++j)
            out(0, j) += av(i, j);
    const double n = static_cast<double>(av.rows());
    for (double& v : out.values())
        v /= n;
    return t.record(std::move(out), {a}, [a, n](Tape& tp, const Matrix& g) {
        const Matrix& avv = tp.value(a);
        Matrix ga(avv.rows(), avv.cols());
        for (std::size_t i = 0; i < ga.rows(); ++i)
            for (std::size_t j = 0; j < ga.cols(); ++j)
                ga(i, j) = g(0, j) / n;
        tp.accumulate(a, std::move(ga));
    });
}

Var mse(Tape& t, Var pred, Var target)
{
    const Matrix& p = t.value(pred);
    const Matrix& y = t.value(target);
    require_same_shape(p, y, "mse");
    if (p.size() == 0)
        throw ShapeError("mse: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p.values()[i] - y.values()[i];
        s += d * d;
    }
    const double n = static_cast<double>(p.size());
    return t.record(Matrix(1, 1, s / n), {pred, target}, [pred, target, n](Tape& tp, const Matrix& g) {
        const Matrix& pv = tp.value(pred);
        const Matrix& yv = tp.value(target);
        Matrix gp(pv.rows(), pv.cols());
        for (std::size_t i = 0; i < gp.size(); ++i)
            gp.values()[i] = 2.0 * (pv.values()[i] - yv.values()[i]) / n * g(0, 0);
        if (tp.requires_grad(target)) {
            Matrix gy = gp;
            for (double& v : gy.values())
                v = -v;
            tp.accumulate(target, std::move(gy));
        }
        tp.accumulate(pred, std::move(gp));
    });
}

Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t end)
{
    const Matrix& av = t.value(a);
    if (begin > end || end > av.cols())
        throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_str(av));
    Matrix out(av.rows(), end - begin);
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = begin; j < end; ++j)
            out(i, j - begin) = av(i, j);
    return t.record(std::move(out), {a}, [a, begin](Tape& tp, const Matrix& g) {
        const Matrix& avv = tp.value(a);
        Matrix ga(avv.rows(), avv.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j)
                ga(i, begin + j) = g(i, j);
        tp.accumulate(a, std::move(ga));
    });
}

Var slice_rows(Tape& t, Var a, std::size_t begin, std::size_t end)
{
    const Matrix& av = t.value(a);
    if (begin > end || end > av.rows())
        throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_str(av));
    Matrix out(end - begin, av.cols());
    for (std::size_t i = begin; i < end; ++i)
        std::copy(av.row(i).begin(), av.row(i).end(), out.row(i - begin).begin());
    return t.record(std::move(out), {a}, [a, begin](Tape& tp, const Matrix& g) {
        const Matrix& avv = tp.value(a);
        Matrix ga(avv.rows(), avv.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
            std::copy(g.row(i).begin(), g.row(i).end(), ga.row(begin + i).begin());
        tp.accumulate(a, std::move(ga));
    });
}

Var concat_cols(Tape& t, std::span<const Var> parts)
{
    if (parts.empty())
        throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = t.value(parts.front()).rows();
    std::size_t cols = 0;
    std::vector<std::size_t> offsets;
    for (Var p : parts) {
        if (t.value(p).rows() != rows)
            throw ShapeError("concat_cols: row count mismatch");
        offsets.push_back(cols);
        cols += t.value(p).cols();
    }
    Matrix out(rows, cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Matrix& pv = t.value(parts[k]);
        for (std::size_t i = 0; i < rows; ++i)
            std::copy(pv.row(i).begin(), pv.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(offsets[k]));
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    return t.record(std::move(out), ps, [ps, offsets](Tape& tp, const Matrix& g) {
        for (std::size_t k = 0; k < ps.size(); ++k) {
            if (!tp.requires_grad(ps[k]))
                continue;
            const Matrix& pv = tp.value(ps[k]);
            Matrix gp(pv.rows(), pv.cols());
            for (std::size_t i = 0; i < gp.rows(); ++i)
                for (std::size_t j = 0; j < gp.cols(); ++j)
                    gp(i, j) = g(i, offsets[k] + j);
            tp.accumulate(ps[k], std::move(gp));
        }
    });
}

Var gather_rows(Tape& t, Var a, std::span<const std::size_t> rows)
{
    const Matrix& av = t.value(a);
    Matrix out(rows.size(), av.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= av.rows())
            throw ShapeError("gather_rows: row index out of range");
        std::copy(av.row(rows[k]).begin(), av.row(rows[k]).end(), out.row(k).begin());
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return t.record(std::move(out), {a}, [a, idx](Tape& tp, const Matrix& g) {
        const Matrix& avv = tp.value(a);
        Matrix ga(avv.rows(), avv.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto dst = ga.row(idx[k]);
            const auto src = g.row(k);
            for (std::size_t j = 0; j < dst.size(); ++j)
                dst[j] += src[j];
        }
        tp.accumulate(a, std::move(ga));
    });
}

Var scatter_rows(Tape& t, Var a, std::span<const std::size_t> rows, std::size_t n)
{
    const Matrix& av = t.value(a);
    if (av.rows() != rows.size())
        throw ShapeError("scatter_rows: index count does not match row count");
    Matrix out(n, av.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= n)
            throw ShapeError("scatter_rows: row index out of range");
        std::copy(av.row(k).begin(), av.row(k).end(), out.row(rows[k]).begin());
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return t.record(std::move(out), {a}, [a, idx](Tape& tp, const Matrix& g) {
        const Matrix& avv = tp.value(a);
        Matrix ga(avv.rows(), avv.cols());
        for (std::size_t k = 0; k < idx.size(); ++k)
            std::copy(g.row(idx[k]).begin(), g.row(idx[k]).end(), ga.row(k).begin());
        tp.accumulate(a, std::move(ga));
    });
}

} // namespace moelab::nk
