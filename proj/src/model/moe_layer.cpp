// SPDX-License-Identifier: Apache-2.0
#include "moelab/model/moe_layer.hpp"

#include "moelab/errors.hpp"
#include "moelab/numkernel/compensated.hpp"
#include "moelab/numkernel/ops.hpp"

#include <string>

namespace moelab::model {

using nk::Matrix;
using nk::Var;

std::size_t MoELayer::parameter_count() const
{
    std::size_t n = gate.parameter_count();
    for (const auto& e : shared)
        n += e.parameter_count();
    for (const auto& e : routed)
        n += e.parameter_count();
    return n;
}

void MoELayer::validate() const
{
    gate.config.validate();
    if (routed.empty())
        throw ConfigError("moe layer " + std::to_string(layer_index) + ": no routed experts");
    if (routed.size() != gate.config.n_routed_experts)
        throw ConfigError("moe layer " + std::to_string(layer_index) + ": gate expects " +
                          std::to_string(gate.config.n_routed_experts) + " routed experts, layer has " +
                          std::to_string(routed.size()));
    for (const auto* list : {&shared, &routed})
        for (const auto& e : *list)
            if (e.hidden_dim() != gate.hidden_dim)
                throw ConfigError("moe layer " + std::to_string(layer_index) + ": expert width " +
                                  std::to_string(e.hidden_dim()) + " != gate width " +
                                  std::to_string(gate.hidden_dim));
}

std::string_view to_string(DispatchMode m)
{
    return m == DispatchMode::dense_mask ? "dense_mask" : "sparse";
}

DispatchMode parse_dispatch_mode(std::string_view s)
{
    if (s == "dense_mask") return DispatchMode::dense_mask;
    if (s == "sparse") return DispatchMode::sparse;
    throw ConfigError("unknown dispatch mode '" + std::string(s) + "'");
}

Var combine_routed(nk::Tape& t, Var weights, std::span<const Var> outputs, const routing::CombineRatios& ratios)
{
    const Matrix& w = t.value(weights);
    const std::size_t n = w.rows();
    const std::size_t n_exp = w.cols();
    if (outputs.size() != n_exp)
        throw ShapeError("combine: " + std::to_string(outputs.size()) + " expert outputs for " +
                         std::to_string(n_exp) + " weight columns");
    if (ratios.numer.rows() != n || ratios.numer.cols() != n_exp || ratios.denom.size() != n)
        throw ShapeError("combine: ratio table does not match the weights");
    if (n_exp == 0)
        throw ShapeError("combine: no experts");
    const std::size_t d = t.value(outputs[0]).cols();
    for (Var o : outputs)
        if (t.value(o).rows() != n || t.value(o).cols() != d)
            throw ShapeError("combine: expert outputs disagree in shape");

    Matrix out(n, d);
    std::vector<nk::DoubleDouble> acc(d);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.end(), nk::DoubleDouble{});
        bool any = false;
        for (std::size_t e = 0; e < n_exp; ++e) {
            const double r = ratios.numer(i, e);
            if (r == 0.0)
                continue;
            any = true;
            const auto y = t.value(outputs[e]).row(i);
            for (std::size_t j = 0; j < d; ++j)
                acc[j] = nk::dd_add(acc[j], nk::two_prod(r, y[j]));
        }
        if (!any)
            continue;
        for (std::size_t j = 0; j < d; ++j)
            out(i, j) = acc[j].hi == 0.0 ? 0.0 : nk::dd_div_to_double(acc[j], ratios.denom[i]);
    }

    std::vector<Var> parents(outputs.begin(), outputs.end());
    parents.push_back(weights);
    std::vector<Var> outs(outputs.begin(), outputs.end());
    return t.record(std::move(out), parents, [weights, outs = std::move(outs)](nk::Tape& tp, const Matrix& g) {
        const Matrix& w = tp.value(weights);
        const std::size_t n = g.rows(), d = g.cols();
        for (std::size_t e = 0; e < outs.size(); ++e) {
            if (!tp.requires_grad(outs[e]))
                continue;
            Matrix dy(n, d);
            for (std::size_t i = 0; i < n; ++i) {
                const double we = w(i, e);
                if (we == 0.0)
                    continue;
                for (std::size_t j = 0; j < d; ++j)
                    dy(i, j) = we * g(i, j);
            }
            tp.accumulate(outs[e], std::move(dy));
        }
        if (tp.requires_grad(weights)) {
            Matrix dw(n, outs.size());
            for (std::size_t e = 0; e < outs.size(); ++e) {
                const Matrix& y = tp.value(outs[e]);
                for (std::size_t i = 0; i < n; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < d; ++j)
                        s += y(i, j) * g(i, j);
                    dw(i, e) = s;
                }
            }
            tp.accumulate(weights, std::move(dw));
        }
    });
}

MoeForward moe_forward(nk::ParamBinder& binder, const MoELayer& layer, Var x, std::optional<Var> encoder_states,
                       const MoeOptions& options)
{
    nk::Tape& t = binder.tape();
    const std::size_t n = t.value(x).rows();
    const std::size_t d = t.value(x).cols();
    if (d != layer.hidden_dim())
        throw ShapeError("moe layer " + std::to_string(layer.layer_index) + ": input width " + std::to_string(d) +
                         " != hidden dim " + std::to_string(layer.hidden_dim()));

    routing::GateOptions gopt;
    gopt.training = options.training;
    gopt.batch = options.batch;
    gopt.route_mask = options.route_mask;
    gopt.forced_idx = options.forced_idx;
    routing::GateForward gf = routing::gate_forward(binder, layer.gate, x, encoder_states, gopt);

    const std::size_t n_exp = layer.routed.size();
    const std::size_t k = gf.decision.top_k;
    std::vector<Var> outputs;
    outputs.reserve(n_exp);
    if (options.dispatch == DispatchMode::dense_mask) {
        for (const auto& e : layer.routed)
            outputs.push_back(ffn_forward(binder, e, x));
    } else {
        std::vector<std::vector<std::size_t>> rows(n_exp);
        const Matrix& numer = gf.ratios.numer;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t s = 0; s < k; ++s) {
                const std::size_t e = gf.decision.topk_idx[i * k + s];
                if (numer(i, e) != 0.0)
                    rows[e].push_back(i);
            }
        for (std::size_t e = 0; e < n_exp; ++e) {
            if (rows[e].empty()) {
                outputs.push_back(t.constant(Matrix(n, d)));
                continue;
            }
            const Var sub = nk::gather_rows(t, x, rows[e]);
            outputs.push_back(nk::scatter_rows(t, ffn_forward(binder, layer.routed[e], sub), rows[e], n));
        }
    }

    Var out = combine_routed(t, gf.combine_weights, outputs, gf.ratios);
    for (const auto& s : layer.shared)
        out = nk::add(t, out, ffn_forward(binder, s, x));

    if (options.log)
        options.log->record(gf.decision, layer.layer_index, options.step);

    return MoeForward{out, gf.aux_loss, std::move(gf.decision)};
}

MoeResult moe_infer(const MoELayer& layer, const Matrix& x, const Matrix* encoder_states, const MoeOptions& options)
{
    nk::Tape t;
    nk::ParamBinder b(t);
    std::optional<Var> enc;
    if (encoder_states)
        enc = t.constant(*encoder_states);
    MoeForward f = moe_forward(b, layer, t.constant(x), enc, options);
    return MoeResult{t.value(f.output), std::move(f.decision)};
}

} // namespace moelab::model
