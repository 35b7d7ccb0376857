// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/numkernel/params.hpp"

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace moelab::model {

enum class Activation { gelu, swiglu };

std::string_view to_string(Activation a);

struct ProjectionShape {
    std::string name;
    std::size_t out = 0;
    std::size_t in = 0;
    bool has_bias = false;

    friend bool operator==(const ProjectionShape&, const ProjectionShape&) = default;
};

/// Structural description of a feed-forward block: its activation and the
/// ordered list of linear projections.
struct FfnStructure {
    Activation activation = Activation::gelu;
    std::vector<ProjectionShape> projections;
};

/// fc1 -> GELU -> fc2 with biases, the shape every expert must share.
FfnStructure gelu_mlp_structure(std::size_t hidden_dim, std::size_t inner_dim);

/// gate_proj/up_proj/down_proj without biases, combined through a gated
/// activation. Used as the mismatching template in structure checks.
FfnStructure gated_three_projection_structure(std::size_t hidden_dim, std::size_t inner_dim);

/// fc2(GELU(fc1(x))). Weights are (out x in); biases are 1 x out.
struct FfnParams {
    nk::Param fc1_weight;
    nk::Param fc1_bias;
    nk::Param fc2_weight;
    nk::Param fc2_bias;

    std::size_t hidden_dim() const noexcept { return fc1_weight.value.cols(); }
    std::size_t inner_dim() const noexcept { return fc1_weight.value.rows(); }
    std::size_t parameter_count() const noexcept;
    FfnStructure structure() const;

    std::array<nk::Param*, 4> params() noexcept { return {&fc1_weight, &fc1_bias, &fc2_weight, &fc2_bias}; }
    std::array<const nk::Param*, 4> params() const noexcept
    {
        return {&fc1_weight, &fc1_bias, &fc2_weight, &fc2_bias};
    }

    void set_trainable(bool trainable) noexcept;
    void set_group(nk::ParamGroup g) noexcept;
};

struct DenseFFN : FfnParams {};

enum class ExpertRole { routed, shared };

std::string_view to_string(ExpertRole r);

struct ExpertFFN : FfnParams {
    ExpertRole role = ExpertRole::routed;

    bool trainable() const noexcept { return fc1_weight.trainable; }
};

/// Zero-valued FFN with correctly named and shaped parameters.
FfnParams zero_ffn(std::size_t hidden_dim, std::size_t inner_dim, nk::ParamGroup group);

/// Random dense FFN: weights N(0, 1/fan_in), biases N(0, 0.1^2).
DenseFFN random_dense_ffn(std::size_t hidden_dim, std::size_t inner_dim, std::mt19937_64& rng);

/// Records the FFN on the binder's tape. Throws ShapeError when x's width is
/// not the FFN's hidden width.
nk::Var ffn_forward(nk::ParamBinder& binder, const FfnParams& ffn, nk::Var x);

/// Plain evaluation in wide64.
nk::Matrix ffn_forward(const FfnParams& ffn, const nk::Matrix& x);

} // namespace moelab::model
