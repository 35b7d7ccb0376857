// SPDX-License-Identifier: Apache-2.0
#include "moelab/model/block_stack.hpp"

#include "moelab/errors.hpp"
#include "moelab/numkernel/ops.hpp"

namespace moelab::model {

using nk::Var;

bool BlockStack::is_moe() const noexcept
{
    return !blocks.empty() && std::holds_alternative<MoELayer>(blocks.front());
}

std::size_t BlockStack::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& b : blocks)
        n += std::visit([](const auto& blk) { return blk.parameter_count(); }, b);
    return n;
}

void BlockStack::validate() const
{
    const bool moe = is_moe();
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const auto& b = blocks[l];
        if (std::holds_alternative<MoELayer>(b) != moe)
            throw ConfigError("block stack mixes dense and MoE blocks (block " + std::to_string(l + 1) + ")");
        if (const auto* d = std::get_if<DenseFFN>(&b)) {
            if (d->hidden_dim() != hidden_dim || d->fc2_weight.value.rows() != hidden_dim)
                throw ConfigError("block " + std::to_string(l + 1) + " width does not match hidden dim " +
                                  std::to_string(hidden_dim));
        } else {
            const auto& m = std::get<MoELayer>(b);
            if (m.hidden_dim() != hidden_dim)
                throw ConfigError("block " + std::to_string(l + 1) + " width does not match hidden dim " +
                                  std::to_string(hidden_dim));
            m.validate();
        }
    }
}

BlockStack random_dense_stack(std::size_t layers, std::size_t hidden_dim, std::size_t inner_dim,
                              std::mt19937_64& rng)
{
    BlockStack s;
    s.hidden_dim = hidden_dim;
    for (std::size_t l = 0; l < layers; ++l)
        s.blocks.emplace_back(random_dense_ffn(hidden_dim, inner_dim, rng));
    return s;
}

namespace {

template <class Stack, class Out>
void collect(Stack& stack, std::vector<Out>& out)
{
    for (std::size_t l = 0; l < stack.blocks.size(); ++l) {
        const std::string prefix = "blocks." + std::to_string(l + 1) + ".";
        auto& b = stack.blocks[l];
        if (auto* d = std::get_if<DenseFFN>(&b)) {
            for (auto* p : d->params())
                out.push_back({prefix + "ffn." + p->name, p});
            continue;
        }
        auto& m = std::get<MoELayer>(b);
        for (std::size_t i = 0; i < m.shared.size(); ++i)
            for (auto* p : m.shared[i].params())
                out.push_back({prefix + "shared." + std::to_string(i) + "." + p->name, p});
        for (std::size_t j = 0; j < m.routed.size(); ++j)
            for (auto* p : m.routed[j].params())
                out.push_back({prefix + "routed." + std::to_string(j) + "." + p->name, p});
        for (auto& p : m.gate.params)
            out.push_back({prefix + "gate." + p.name, &p});
    }
}

} // namespace

std::vector<NamedParam> named_parameters(BlockStack& stack)
{
    std::vector<NamedParam> out;
    collect(stack, out);
    return out;
}

std::vector<ConstNamedParam> named_parameters(const BlockStack& stack)
{
    std::vector<ConstNamedParam> out;
    collect(stack, out);
    return out;
}

StackForward stack_forward(nk::ParamBinder& binder, const BlockStack& stack, Var x,
                           std::optional<Var> encoder_states, const MoeOptions& options)
{
    nk::Tape& t = binder.tape();
    if (t.value(x).cols() != stack.hidden_dim)
        throw ShapeError("stack: input width " + std::to_string(t.value(x).cols()) + " != hidden dim " +
                         std::to_string(stack.hidden_dim));
    StackForward out;
    Var h = x;
    for (const auto& b : stack.blocks) {
        Var y;
        if (const auto* d = std::get_if<DenseFFN>(&b)) {
            y = ffn_forward(binder, *d, h);
        } else {
            MoeForward f = moe_forward(binder, std::get<MoELayer>(b), h, encoder_states, options);
            y = f.output;
            if (f.aux_loss)
                out.aux_losses.push_back(*f.aux_loss);
            out.decisions.push_back(std::move(f.decision));
        }
        h = nk::add(t, h, y);
    }
    out.output = h;
    return out;
}

nk::Matrix stack_infer(const BlockStack& stack, const nk::Matrix& x, const nk::Matrix* encoder_states,
                       const MoeOptions& options)
{
    nk::Tape t;
    nk::ParamBinder b(t);
    std::optional<Var> enc;
    if (encoder_states)
        enc = t.constant(*encoder_states);
    return t.value(stack_forward(b, stack, t.constant(x), enc, options).output);
}

} // namespace moelab::model
