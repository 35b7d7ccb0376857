// SPDX-License-Identifier: Apache-2.0
#include "moelab/routing/gate.hpp"

#include "moelab/errors.hpp"
#include "moelab/numkernel/attention.hpp"
#include "moelab/numkernel/ops.hpp"
#include "moelab/numkernel/random.hpp"
#include "moelab/routing/aux_loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace moelab::routing {

using nk::Matrix;
using nk::Param;
using nk::ParamGroup;
using nk::Var;

std::string_view to_string(GateKind k)
{
    switch (k) {
    case GateKind::linear: return "linear";
    case GateKind::mlp: return "mlp";
    case GateKind::cross_attention: return "cross_attention";
    }
    return "linear";
}

GateKind parse_gate_kind(std::string_view s)
{
    if (s == "linear") return GateKind::linear;
    if (s == "mlp") return GateKind::mlp;
    if (s == "cross_attention" || s == "cross-attention") return GateKind::cross_attention;
    throw ConfigError("unknown gate kind '" + std::string(s) + "'");
}

double GateConfig::init_std() const
{
    if (gate_init_std)
        return *gate_init_std;
    return kind == GateKind::linear ? 0.01 : 0.002;
}

void GateConfig::validate() const
{
    if (n_routed_experts == 0)
        throw ConfigError("gate: n_routed_experts must be at least 1");
    if (top_k == 0 || top_k > n_routed_experts)
        throw ConfigError("gate: top_k=" + std::to_string(top_k) + " must be in [1, " +
                          std::to_string(n_routed_experts) + "]");
    if (aux_loss_alpha < 0.0)
        throw ConfigError("gate: aux_loss_alpha must be non-negative");
    if (init_std() < 0.0)
        throw ConfigError("gate: gate_init_std must be non-negative");
    if (kind == GateKind::mlp && mlp_hidden_dim == 0)
        throw ConfigError("gate: mlp_hidden_dim must be positive");
    if (kind == GateKind::cross_attention && attn_heads == 0)
        throw ConfigError("gate: attn_heads must be positive");
}

nlohmann::json to_json(const GateConfig& c)
{
    nlohmann::json j = {{"kind", std::string(to_string(c.kind))},
                        {"n_routed_experts", c.n_routed_experts},
                        {"top_k", c.top_k},
                        {"aux_loss_alpha", c.aux_loss_alpha},
                        {"seq_aux", c.seq_aux},
                        {"norm_topk_prob", c.norm_topk_prob},
                        {"mlp_hidden_dim", c.mlp_hidden_dim},
                        {"attn_heads", c.attn_heads},
                        {"encoder_dim", c.encoder_dim}};
    j["gate_init_std"] = c.gate_init_std ? nlohmann::json(*c.gate_init_std) : nlohmann::json(nullptr);
    return j;
}

GateConfig gate_config_from_json(const nlohmann::json& j)
{
    GateConfig c;
    try {
        if (j.contains("kind"))
            c.kind = parse_gate_kind(j.at("kind").get<std::string>());
        c.n_routed_experts = j.value("n_routed_experts", c.n_routed_experts);
        c.top_k = j.value("top_k", c.top_k);
        c.aux_loss_alpha = j.value("aux_loss_alpha", c.aux_loss_alpha);
        c.seq_aux = j.value("seq_aux", c.seq_aux);
        c.norm_topk_prob = j.value("norm_topk_prob", c.norm_topk_prob);
        c.mlp_hidden_dim = j.value("mlp_hidden_dim", c.mlp_hidden_dim);
        c.attn_heads = j.value("attn_heads", c.attn_heads);
        c.encoder_dim = j.value("encoder_dim", c.encoder_dim);
        if (j.contains("gate_init_std") && !j.at("gate_init_std").is_null())
            c.gate_init_std = j.at("gate_init_std").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("gate config: ") + e.what());
    }
    c.validate();
    return c;
}

std::size_t Gate::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params)
        n += p.value.size();
    return n;
}

void Gate::set_trainable(bool trainable)
{
    for (auto& p : params)
        p.trainable = trainable;
}

namespace {

Param gate_param(std::string name, Matrix value)
{
    return Param{std::move(name), std::move(value), true, ParamGroup::gate};
}

double fan_in_std(std::size_t fan_in)
{
    return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

} // namespace

Gate empty_gate(const GateConfig& config, std::size_t hidden_dim)
{
    config.validate();
    Gate g;
    g.config = config;
    g.hidden_dim = hidden_dim;
    const std::size_t e = config.n_routed_experts;
    switch (config.kind) {
    case GateKind::linear:
        g.params.push_back(gate_param("weight", Matrix(e, hidden_dim)));
        break;
    case GateKind::mlp: {
        const std::size_t h = config.mlp_hidden_dim;
        g.params.push_back(gate_param("fc1.weight", Matrix(h, hidden_dim)));
        g.params.push_back(gate_param("fc1.bias", Matrix(1, h)));
        g.params.push_back(gate_param("fc2.weight", Matrix(e, h)));
        g.params.push_back(gate_param("fc2.bias", Matrix(1, e)));
        break;
    }
    case GateKind::cross_attention: {
        const std::size_t kd = config.encoder_width(hidden_dim);
        if (hidden_dim % config.attn_heads != 0)
            throw ConfigError("gate: attn_heads=" + std::to_string(config.attn_heads) +
                              " does not divide hidden dim " + std::to_string(hidden_dim));
        g.params.push_back(gate_param("attn.q_weight", Matrix(hidden_dim, hidden_dim)));
        g.params.push_back(gate_param("attn.q_bias", Matrix(1, hidden_dim)));
        g.params.push_back(gate_param("attn.k_weight", Matrix(hidden_dim, kd)));
        g.params.push_back(gate_param("attn.k_bias", Matrix(1, hidden_dim)));
        g.params.push_back(gate_param("attn.v_weight", Matrix(hidden_dim, kd)));
        g.params.push_back(gate_param("attn.v_bias", Matrix(1, hidden_dim)));
        g.params.push_back(gate_param("attn.out_weight", Matrix(hidden_dim, hidden_dim)));
        g.params.push_back(gate_param("attn.out_bias", Matrix(1, hidden_dim)));
        g.params.push_back(gate_param("head.weight", Matrix(e, hidden_dim)));
        g.params.push_back(gate_param("head.bias", Matrix(1, e)));
        break;
    }
    }
    return g;
}

Gate init_gate(const GateConfig& config, std::size_t hidden_dim, std::mt19937_64& rng)
{
    Gate g = empty_gate(config, hidden_dim);
    const double tiny = config.init_std();
    const std::size_t e = config.n_routed_experts;
    switch (config.kind) {
    case GateKind::linear:
        g.params[0].value = nk::normal_matrix(e, hidden_dim, tiny, rng);
        break;
    case GateKind::mlp: {
        const std::size_t h = config.mlp_hidden_dim;
        g.params[0].value = nk::normal_matrix(h, hidden_dim, fan_in_std(hidden_dim), rng);
        g.params[1].value = nk::normal_matrix(1, h, fan_in_std(hidden_dim), rng);
        g.params[2].value = nk::normal_matrix(e, h, tiny, rng);
        break;
    }
    case GateKind::cross_attention: {
        const std::size_t kd = config.encoder_width(hidden_dim);
        g.params[0].value = nk::normal_matrix(hidden_dim, hidden_dim, fan_in_std(hidden_dim), rng);
        g.params[2].value = nk::normal_matrix(hidden_dim, kd, fan_in_std(kd), rng);
        g.params[4].value = nk::normal_matrix(hidden_dim, kd, fan_in_std(kd), rng);
        g.params[6].value = nk::normal_matrix(hidden_dim, hidden_dim, fan_in_std(hidden_dim), rng);
        g.params[8].value = nk::normal_matrix(e, hidden_dim, tiny, rng);
        break;
    }
    }
    return g;
}

namespace {

Var gate_logits(nk::ParamBinder& b, const Gate& g, Var hidden, std::optional<Var> encoder, bool& fallback)
{
    nk::Tape& t = b.tape();
    const auto& p = g.params;
    if (t.value(hidden).cols() != g.hidden_dim)
        throw ShapeError("gate: hidden states have " + std::to_string(t.value(hidden).cols()) +
                         " columns, gate expects " + std::to_string(g.hidden_dim));
    switch (g.config.kind) {
    case GateKind::linear:
        return nk::linear(t, hidden, b.bind(p[0]), std::nullopt);
    case GateKind::mlp: {
        const Var h = nk::gelu(t, nk::linear(t, hidden, b.bind(p[0]), b.bind(p[1])));
        return nk::linear(t, h, b.bind(p[2]), b.bind(p[3]));
    }
    case GateKind::cross_attention: {
        const std::size_t kd = g.config.encoder_width(g.hidden_dim);
        Var kv = hidden;
        if (encoder) {
            if (t.value(*encoder).cols() != kd)
                throw ShapeError("gate: encoder states have " + std::to_string(t.value(*encoder).cols()) +
                                 " columns, encoder_dim is " + std::to_string(kd));
            kv = *encoder;
        } else {
            if (kd != g.hidden_dim)
                throw ShapeError("gate: self-attention fallback needs encoder_dim equal to hidden dim");
            fallback = true;
        }
        const nk::AttentionWeights w{b.bind(p[0]), b.bind(p[1]), b.bind(p[2]), b.bind(p[3]),
                                     b.bind(p[4]), b.bind(p[5]), b.bind(p[6]), b.bind(p[7])};
        const Var attn = nk::mha_forward(t, hidden, kv, kv, g.config.attn_heads, w);
        return nk::linear(t, attn, b.bind(p[8]), b.bind(p[9]));
    }
    }
    throw ConfigError("gate: unhandled kind");
}

} // namespace

GateForward gate_forward(nk::ParamBinder& binder, const Gate& gate, Var hidden, std::optional<Var> encoder_states,
                         const GateOptions& options)
{
    nk::Tape& t = binder.tape();
    const GateConfig& cfg = gate.config;
    const std::size_t n_exp = cfg.n_routed_experts;
    const std::size_t k = cfg.top_k;

    GateForward out;
    bool fallback = false;
    out.logits = gate_logits(binder, gate, hidden, encoder_states, fallback);
    out.scores = nk::softmax_rows(t, out.logits);

    const Matrix& logits = t.value(out.logits);
    const Matrix& scores = t.value(out.scores);
    const std::size_t n = scores.rows();

    if (options.route_mask && (options.route_mask->rows() != n || options.route_mask->cols() != n_exp))
        throw ShapeError("gate: route mask shape does not match (tokens x experts)");
    if (options.forced_idx && options.forced_idx->size() != n * k)
        throw ShapeError("gate: forced selection must have tokens x top_k entries");

    RoutingDecision& d = out.decision;
    d.n_experts = n_exp;
    d.top_k = k;
    d.full_scores = scores;
    d.fallback_self_attention = fallback;
    d.topk_idx.resize(n * k);
    d.topk_weight.resize(n * k);

    Matrix mask(n, n_exp);
    for (std::size_t i = 0; i < n; ++i) {
        if (options.forced_idx) {
            for (std::size_t s = 0; s < k; ++s) {
                const std::size_t e = (*options.forced_idx)[i * k + s];
                if (e >= n_exp)
                    throw ArgumentError("gate: forced expert index out of range");
                d.topk_idx[i * k + s] = e;
            }
        } else {
            const nk::TopK sel = nk::topk(scores.row(i), k);
            std::copy(sel.indices.begin(), sel.indices.end(), d.topk_idx.begin() + static_cast<std::ptrdiff_t>(i * k));
        }
        for (std::size_t s = 0; s < k; ++s) {
            const std::size_t e = d.topk_idx[i * k + s];
            mask(i, e) = options.route_mask ? (*options.route_mask)(i, e) : 1.0;
        }
    }

    const Var masked = nk::hadamard(t, out.scores, t.constant(mask));
    const bool renorm = k > 1 && cfg.norm_topk_prob;
    constexpr double kRenormEps = 1e-20;
    out.combine_weights = renorm ? nk::normalize_rows(t, masked, kRenormEps) : masked;

    const Matrix& w = t.value(out.combine_weights);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < k; ++s)
            d.topk_weight[i * k + s] = w(i, d.topk_idx[i * k + s]);

    // Exact ratios from the same exponentials the softmax used.
    out.ratios.numer = Matrix(n, n_exp);
    out.ratios.denom.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = logits.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        nk::DoubleDouble total, selected;
        for (std::size_t e = 0; e < n_exp; ++e) {
            const double ex = std::exp(row[e] - mx);
            total = nk::dd_add(total, {ex, 0.0});
            if (mask(i, e) != 0.0) {
                const double num = ex * mask(i, e);
                out.ratios.numer(i, e) = num;
                selected = nk::dd_add(selected, {num, 0.0});
            }
        }
        out.ratios.denom[i] =
            renorm ? nk::dd_add(selected, nk::two_prod(kRenormEps, total.hi)) : total;
    }

    if (options.training && cfg.aux_loss_alpha > 0.0 && n > 0) {
        if (cfg.seq_aux) {
            const BatchShape shape = options.batch.value_or(BatchShape{1, n});
            out.aux_loss = aux_loss_seq(t, out.scores, d.topk_idx, cfg.aux_loss_alpha, n_exp, shape);
        } else {
            out.aux_loss = aux_loss_global(t, out.scores, d.topk_idx, cfg.aux_loss_alpha, n_exp);
        }
        d.aux_loss = t.value(*out.aux_loss)(0, 0);
    }
    return out;
}

} // namespace moelab::routing
