// SPDX-License-Identifier: Apache-2.0
#include "moelab/model/ffn.hpp"

#include "moelab/errors.hpp"
#include "moelab/numkernel/ops.hpp"
#include "moelab/numkernel/random.hpp"

#include <cmath>

namespace moelab::model {

std::string_view to_string(Activation a)
{
    return a == Activation::gelu ? "gelu" : "swiglu";
}

std::string_view to_string(ExpertRole r)
{
    return r == ExpertRole::routed ? "routed" : "shared";
}

FfnStructure gelu_mlp_structure(std::size_t hidden_dim, std::size_t inner_dim)
{
    return {Activation::gelu, {{"fc1", inner_dim, hidden_dim, true}, {"fc2", hidden_dim, inner_dim, true}}};
}

FfnStructure gated_three_projection_structure(std::size_t hidden_dim, std::size_t inner_dim)
{
    return {Activation::swiglu,
            {{"gate_proj", inner_dim, hidden_dim, false},
             {"up_proj", inner_dim, hidden_dim, false},
             {"down_proj", hidden_dim, inner_dim, false}}};
}

std::size_t FfnParams::parameter_count() const noexcept
{
    return fc1_weight.value.size() + fc1_bias.value.size() + fc2_weight.value.size() + fc2_bias.value.size();
}

FfnStructure FfnParams::structure() const
{
    return {Activation::gelu,
            {{"fc1", fc1_weight.value.rows(), fc1_weight.value.cols(), !fc1_bias.value.empty()},
             {"fc2", fc2_weight.value.rows(), fc2_weight.value.cols(), !fc2_bias.value.empty()}}};
}

void FfnParams::set_trainable(bool trainable) noexcept
{
    for (nk::Param* p : params())
        p->trainable = trainable;
}

void FfnParams::set_group(nk::ParamGroup g) noexcept
{
    for (nk::Param* p : params())
        p->group = g;
}

FfnParams zero_ffn(std::size_t hidden_dim, std::size_t inner_dim, nk::ParamGroup group)
{
    FfnParams f;
    f.fc1_weight = {"fc1.weight", nk::Matrix(inner_dim, hidden_dim), false, group};
    f.fc1_bias = {"fc1.bias", nk::Matrix(1, inner_dim), false, group};
    f.fc2_weight = {"fc2.weight", nk::Matrix(hidden_dim, inner_dim), false, group};
    f.fc2_bias = {"fc2.bias", nk::Matrix(1, hidden_dim), false, group};
    return f;
}

DenseFFN random_dense_ffn(std::size_t hidden_dim, std::size_t inner_dim, std::mt19937_64& rng)
{
    DenseFFN d;
    static_cast<FfnParams&>(d) = zero_ffn(hidden_dim, inner_dim, nk::ParamGroup::dense);
    d.fc1_weight.value = nk::normal_matrix(inner_dim, hidden_dim, 1.0 / std::sqrt(double(hidden_dim)), rng);
    d.fc1_bias.value = nk::normal_matrix(1, inner_dim, 0.1, rng);
    d.fc2_weight.value = nk::normal_matrix(hidden_dim, inner_dim, 1.0 / std::sqrt(double(inner_dim)), rng);
    d.fc2_bias.value = nk::normal_matrix(1, hidden_dim, 0.1, rng);
    return d;
}

nk::Var ffn_forward(nk::ParamBinder& binder, const FfnParams& ffn, nk::Var x)
{
    nk::Tape& t = binder.tape();
    if (t.value(x).cols() != ffn.hidden_dim())
        throw ShapeError("ffn: input width " + std::to_string(t.value(x).cols()) + " != hidden dim " +
                         std::to_string(ffn.hidden_dim()));
    const nk::Var h = nk::linear(t, x, binder.bind(ffn.fc1_weight), binder.bind(ffn.fc1_bias));
    return nk::linear(t, nk::gelu(t, h), binder.bind(ffn.fc2_weight), binder.bind(ffn.fc2_bias));
}

nk::Matrix ffn_forward(const FfnParams& ffn, const nk::Matrix& x)
{
    nk::Tape t;
    nk::ParamBinder b(t);
    return t.value(ffn_forward(b, ffn, t.constant(x)));
}

} // namespace moelab::model
