// SPDX-License-Identifier: Apache-2.0
#include "moelab/convert/convert.hpp"

#include "moelab/errors.hpp"
#include "moelab/numkernel/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace moelab::convert {

using model::BlockStack;
using model::DenseFFN;
using model::ExpertFFN;
using model::ExpertRole;
using model::MoELayer;

std::string_view to_string(SharedInit s)
{
    switch (s) {
    case SharedInit::verify_zero: return "verify_zero";
    case SharedInit::train_micro_noise: return "train_micro_noise";
    case SharedInit::clone_dense: return "clone_dense";
    }
    return "verify_zero";
}

SharedInit parse_shared_init(std::string_view s)
{
    if (s == "verify_zero") return SharedInit::verify_zero;
    if (s == "train_micro_noise" || s == "micro_noise") return SharedInit::train_micro_noise;
    if (s == "clone_dense") return SharedInit::clone_dense;
    throw ConfigError("unknown shared_init '" + std::string(s) + "'");
}

std::string_view to_string(FreezePolicy f)
{
    return f == FreezePolicy::gate_shared ? "gate_shared" : "all";
}

FreezePolicy parse_freeze_policy(std::string_view s)
{
    if (s == "gate_shared" || s == "gate+shared") return FreezePolicy::gate_shared;
    if (s == "all") return FreezePolicy::all;
    throw ConfigError("unknown freeze policy '" + std::string(s) + "'");
}

void ConversionConfig::validate() const
{
    if (n_routed == 0)
        throw ConfigError("conversion: n_routed must be at least 1");
    if (gate.n_routed_experts != n_routed)
        throw ConfigError("conversion: gate.n_routed_experts=" + std::to_string(gate.n_routed_experts) +
                          " differs from n_routed=" + std::to_string(n_routed));
    if (shared_init == SharedInit::train_micro_noise && !(sigma > 0.0))
        throw ConfigError("conversion: micro-noise sigma must be positive");
    gate.validate();
}

nlohmann::json to_json(const ConversionConfig& c)
{
    return {{"n_routed", c.n_routed},
            {"n_shared", c.n_shared},
            {"shared_init", std::string(to_string(c.shared_init))},
            {"sigma", c.sigma},
            {"freeze", std::string(to_string(c.freeze))}};
}

ConversionConfig conversion_config_from_json(const nlohmann::json& j, const routing::GateConfig& gate)
{
    ConversionConfig c;
    c.gate = gate;
    try {
        c.n_routed = j.value("n_routed", gate.n_routed_experts);
        c.n_shared = j.value("n_shared", c.n_shared);
        if (j.contains("shared_init"))
            c.shared_init = parse_shared_init(j.at("shared_init").get<std::string>());
        c.sigma = j.value("sigma", c.sigma);
        if (j.contains("freeze"))
            c.freeze = parse_freeze_policy(j.at("freeze").get<std::string>());
        if (j.contains("routed_scaling") && j.at("routed_scaling").get<double>() != 1.0)
            throw ConfigError("conversion: routed_scaling is fixed at 1.0");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("conversion config: ") + e.what());
    }
    c.validate();
    return c;
}

StructureVerdict check_structure(const model::FfnStructure& dense, const model::FfnStructure& tmpl)
{
    StructureVerdict v;
    auto fail = [&](std::string m) {
        v.ok = false;
        v.mismatches.push_back(std::move(m));
    };
    if (dense.activation != tmpl.activation)
        fail("activation: dense uses " + std::string(model::to_string(dense.activation)) + ", template uses " +
             std::string(model::to_string(tmpl.activation)));
    if (dense.projections.size() != tmpl.projections.size())
        fail("layer count: dense has " + std::to_string(dense.projections.size()) + " projections, template has " +
             std::to_string(tmpl.projections.size()));
    const std::size_t n = std::min(dense.projections.size(), tmpl.projections.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = dense.projections[i];
        const auto& b = tmpl.projections[i];
        if (a.out != b.out || a.in != b.in)
            fail("shape of projection " + std::to_string(i) + ": dense " + a.name + " is " + std::to_string(a.out) +
                 "x" + std::to_string(a.in) + ", template " + b.name + " is " + std::to_string(b.out) + "x" +
                 std::to_string(b.in));
        if (a.has_bias != b.has_bias)
            fail("bias of projection " + std::to_string(i) + ": dense " + (a.has_bias ? "has" : "lacks") +
                 " a bias, template " + (b.has_bias ? "has" : "lacks") + " one");
    }
    return v;
}

StructureVerdict check_structure(const DenseFFN& dense, const ExpertFFN& tmpl)
{
    return check_structure(dense.structure(), tmpl.structure());
}

std::vector<ExpertFFN> clone_routed(const DenseFFN& dense, std::size_t n)
{
    if (n < 1)
        throw ArgumentError("clone_routed: need at least one expert");
    std::vector<ExpertFFN> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ExpertFFN e;
        static_cast<model::FfnParams&>(e) = dense;
        e.role = ExpertRole::routed;
        e.set_group(nk::ParamGroup::routed);
        e.set_trainable(false);
        const StructureVerdict v = check_structure(dense, e);
        if (!v.ok)
            throw PreconditionError("clone_routed: clone fails the structure check");
        out.push_back(std::move(e));
    }
    return out;
}

ExpertFFN init_shared(std::size_t hidden_dim, std::size_t inner_dim, SharedInit mode, double sigma,
                      std::mt19937_64& rng, const DenseFFN* source)
{
    ExpertFFN e;
    static_cast<model::FfnParams&>(e) = model::zero_ffn(hidden_dim, inner_dim, nk::ParamGroup::shared);
    e.role = ExpertRole::shared;
    switch (mode) {
    case SharedInit::verify_zero:
        break;
    case SharedInit::train_micro_noise:
        if (!(sigma > 0.0))
            throw ConfigError("init_shared: micro-noise sigma must be positive");
        e.fc1_weight.value = nk::normal_matrix(inner_dim, hidden_dim, sigma, rng);
        e.fc2_weight.value = nk::normal_matrix(hidden_dim, inner_dim, sigma, rng);
        break;
    case SharedInit::clone_dense:
        if (!source)
            throw ArgumentError("init_shared: clone_dense needs a source FFN");
        if (source->hidden_dim() != hidden_dim || source->inner_dim() != inner_dim)
            throw ShapeError("init_shared: source FFN shape differs from the requested dims");
        static_cast<model::FfnParams&>(e) = *source;
        e.set_group(nk::ParamGroup::shared);
        break;
    }
    e.set_trainable(true);
    return e;
}

void apply_freeze_policy(BlockStack& stack, FreezePolicy policy)
{
    for (auto& b : stack.blocks) {
        if (auto* d = std::get_if<DenseFFN>(&b)) {
            d->set_trainable(policy == FreezePolicy::all);
            continue;
        }
        auto& m = std::get<MoELayer>(b);
        for (auto& e : m.routed)
            e.set_trainable(policy == FreezePolicy::all);
        for (auto& e : m.shared)
            e.set_trainable(true);
        m.gate.set_trainable(true);
    }
}

BlockStack convert_model(const BlockStack& dense, const ConversionConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    if (dense.is_moe())
        throw PreconditionError("convert: input stack is already MoE");
    dense.validate();

    BlockStack out;
    out.hidden_dim = dense.hidden_dim;
    for (std::size_t l = 0; l < dense.blocks.size(); ++l) {
        const auto& d = std::get<DenseFFN>(dense.blocks[l]);
        ExpertFFN tmpl;
        static_cast<model::FfnParams&>(tmpl) = model::zero_ffn(d.hidden_dim(), d.inner_dim(), nk::ParamGroup::routed);
        const StructureVerdict v = check_structure(d, tmpl);
        if (!v.ok) {
            std::string msg = "convert: block " + std::to_string(l + 1) + " fails the structure check:";
            for (const auto& m : v.mismatches)
                msg += "\n  " + m;
            throw PreconditionError(msg);
        }

        MoELayer m;
        m.layer_index = l + 1;
        m.routed = clone_routed(d, cfg.n_routed);
        for (std::size_t i = 0; i < cfg.n_shared; ++i) {
            auto rng = nk::rng_stream(seed, "shared", l * cfg.n_shared + i);
            m.shared.push_back(init_shared(d.hidden_dim(), d.inner_dim(), cfg.shared_init, cfg.sigma, rng, &d));
        }
        auto grng = nk::rng_stream(seed, "gate", l);
        m.gate = routing::init_gate(cfg.gate, d.hidden_dim(), grng);
        out.blocks.emplace_back(std::move(m));
    }
    apply_freeze_policy(out, cfg.freeze);
    out.validate();
    return out;
}

BlockStack recover_dense(const BlockStack& moe)
{
    if (!moe.is_moe())
        throw PreconditionError("recover_dense: input stack is not MoE");
    BlockStack out;
    out.hidden_dim = moe.hidden_dim;
    for (const auto& b : moe.blocks) {
        const auto& m = std::get<MoELayer>(b);
        if (m.routed.empty())
            throw PreconditionError("recover_dense: layer " + std::to_string(m.layer_index) + " has no routed expert");
        DenseFFN d;
        static_cast<model::FfnParams&>(d) = m.routed.front();
        d.set_group(nk::ParamGroup::dense);
        out.blocks.emplace_back(std::move(d));
    }
    return out;
}

EquivalenceReport verify_equivalence(const BlockStack& dense, const BlockStack& moe,
                                     std::span<const nk::Matrix> probes, const nk::Matrix* encoder_states,
                                     const precision::PrecisionPolicy* compute)
{
    if (dense.is_moe() || !moe.is_moe())
        throw PreconditionError("verify: expected a dense stack and an MoE stack");
    if (dense.layers() != moe.layers() || dense.hidden_dim != moe.hidden_dim)
        throw PreconditionError("verify: stacks differ in depth or width");
    for (const auto& b : moe.blocks) {
        const auto& m = std::get<MoELayer>(b);
        if (m.gate.config.top_k != m.routed.size())
            throw PreconditionError("verify: layer " + std::to_string(m.layer_index) + " has top_k=" +
                                    std::to_string(m.gate.config.top_k) + " with " +
                                    std::to_string(m.routed.size()) +
                                    " routed experts; equivalence needs every expert selected so the weights sum "
                                    "to 1 (set top_k = n_routed)");
    }
    if (probes.empty())
        throw ArgumentError("verify: no probe batches");

    nk::ParamBinder::Quantizer q;
    if (compute)
        q = [compute](const nk::Matrix& m) { return compute->compute_copy(m); };

    auto run = [&](const BlockStack& s, const nk::Matrix& x) {
        nk::Tape t;
        nk::ParamBinder b(t, q);
        std::optional<nk::Var> enc;
        if (encoder_states)
            enc = t.constant(*encoder_states);
        return t.value(model::stack_forward(b, s, t.constant(x), enc, {.training = false}).output);
    };

    EquivalenceReport r;
    for (const auto& x : probes) {
        const nk::Matrix a = run(dense, x), b = run(moe, x);
        const double dev = a.all_finite() && b.all_finite() ? nk::max_abs_diff(a, b)
                                                             : std::numeric_limits<double>::infinity();
        r.max_abs_dev = std::max(r.max_abs_dev, dev);
        ++r.probes;
    }
    if (r.max_abs_dev == 0.0)
        r.verdict = "equivalent";
    else if (r.max_abs_dev < kNearEquivalenceBound)
        r.verdict = "near_equivalent";
    else
        r.verdict = "not_equivalent";
    return r;
}

nlohmann::json to_json(const EquivalenceReport& r)
{
    return {{"max_abs_dev", r.max_abs_dev}, {"verdict", r.verdict}, {"probes", r.probes}};
}

} // namespace moelab::convert
