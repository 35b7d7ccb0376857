// SPDX-License-Identifier: Apache-2.0
#include "moelab/routing/aux_loss.hpp"

#include "moelab/errors.hpp"
#include "moelab/numkernel/ops.hpp"

#include <string>
#include <vector>

namespace moelab::routing {

using nk::Matrix;
using nk::Var;

namespace {

std::size_t infer_top_k(const Matrix& scores, std::span<const std::size_t> idx, std::size_t n_experts)
{
    if (scores.rows() == 0)
        throw ArgumentError("aux loss: empty batch");
    if (scores.cols() != n_experts)
        throw ShapeError("aux loss: scores have " + std::to_string(scores.cols()) + " columns, expected " +
                         std::to_string(n_experts));
    if (idx.empty() || idx.size() % scores.rows() != 0)
        throw ShapeError("aux loss: selection count is not a multiple of the token count");
    for (std::size_t e : idx)
        if (e >= n_experts)
            throw ArgumentError("aux loss: selection index out of range");
    return idx.size() / scores.rows();
}

// E * (share of selections landing on each expert), over all tokens.
std::vector<double> global_load(std::span<const std::size_t> idx, std::size_t n_experts)
{
    std::vector<double> fi(n_experts, 0.0);
    for (std::size_t e : idx)
        fi[e] += 1.0;
    for (double& v : fi)
        v = v / static_cast<double>(idx.size()) * static_cast<double>(n_experts);
    return fi;
}

// Per-sequence counts divided by seq_len * top_k / E.
std::vector<std::vector<double>> sequence_load(std::span<const std::size_t> idx, std::size_t n_experts,
                                               BatchShape shape, std::size_t top_k)
{
    std::vector<std::vector<double>> ce(shape.batch, std::vector<double>(n_experts, 0.0));
    const std::size_t per_seq = shape.seq_len * top_k;
    for (std::size_t b = 0; b < shape.batch; ++b)
        for (std::size_t s = 0; s < per_seq; ++s)
            ce[b][idx[b * per_seq + s]] += 1.0;
    const double norm = static_cast<double>(shape.seq_len * top_k) / static_cast<double>(n_experts);
    for (auto& row : ce)
        for (double& v : row)
            v /= norm;
    return ce;
}

void check_shape(BatchShape shape, std::size_t tokens)
{
    if (shape.batch == 0 || shape.seq_len == 0 || shape.batch * shape.seq_len != tokens)
        throw ShapeError("aux loss: batch shape " + std::to_string(shape.batch) + "x" + std::to_string(shape.seq_len) +
                         " does not match " + std::to_string(tokens) + " tokens");
}

} // namespace

std::optional<double> aux_loss_global(const Matrix& scores, std::span<const std::size_t> topk_idx, double alpha,
                                      std::size_t n_experts)
{
    infer_top_k(scores, topk_idx, n_experts);
    if (alpha == 0.0)
        return std::nullopt;
    const auto fi = global_load(topk_idx, n_experts);
    double loss = 0.0;
    for (std::size_t e = 0; e < n_experts; ++e) {
        double pi = 0.0;
        for (std::size_t i = 0; i < scores.rows(); ++i)
            pi += scores(i, e);
        pi /= static_cast<double>(scores.rows());
        loss += pi * fi[e];
    }
    return loss * alpha;
}

std::optional<double> aux_loss_seq(const Matrix& scores, std::span<const std::size_t> topk_idx, double alpha,
                                   std::size_t n_experts, BatchShape shape)
{
    const std::size_t k = infer_top_k(scores, topk_idx, n_experts);
    check_shape(shape, scores.rows());
    if (alpha == 0.0)
        return std::nullopt;
    const auto ce = sequence_load(topk_idx, n_experts, shape, k);
    double total = 0.0;
    for (std::size_t b = 0; b < shape.batch; ++b) {
        double seq = 0.0;
        for (std::size_t e = 0; e < n_experts; ++e) {
            double mean = 0.0;
            for (std::size_t s = 0; s < shape.seq_len; ++s)
                mean += scores(b * shape.seq_len + s, e);
            mean /= static_cast<double>(shape.seq_len);
            seq += ce[b][e] * mean;
        }
        total += seq;
    }
    return total / static_cast<double>(shape.batch) * alpha;
}

Var aux_loss_global(nk::Tape& t, Var scores, std::span<const std::size_t> topk_idx, double alpha,
                    std::size_t n_experts)
{
    infer_top_k(t.value(scores), topk_idx, n_experts);
    const auto fi = global_load(topk_idx, n_experts);
    const Var pi = nk::mean_rows(t, scores);
    const Var load = t.constant(Matrix(1, n_experts, std::vector<double>(fi)));
    return nk::scale(t, nk::sum(t, nk::hadamard(t, pi, load)), alpha);
}

Var aux_loss_seq(nk::Tape& t, Var scores, std::span<const std::size_t> topk_idx, double alpha, std::size_t n_experts,
                 BatchShape shape)
{
    const std::size_t k = infer_top_k(t.value(scores), topk_idx, n_experts);
    check_shape(shape, t.value(scores).rows());
    const auto ce = sequence_load(topk_idx, n_experts, shape, k);
    Var total{};
    for (std::size_t b = 0; b < shape.batch; ++b) {
        const Var mean = nk::mean_rows(t, nk::slice_rows(t, scores, b * shape.seq_len, (b + 1) * shape.seq_len));
        const Var load = t.constant(Matrix(1, n_experts, std::vector<double>(ce[b])));
        const Var term = nk::sum(t, nk::hadamard(t, mean, load));
        total = total.valid() ? nk::add(t, total, term) : term;
    }
    return nk::scale(t, total, alpha / static_cast<double>(shape.batch));
}

} // namespace moelab::routing
