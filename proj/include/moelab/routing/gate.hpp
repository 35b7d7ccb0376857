// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/numkernel/compensated.hpp"
#include "moelab/numkernel/params.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace moelab::routing {

enum class GateKind { linear, mlp, cross_attention };

std::string_view to_string(GateKind k);
GateKind parse_gate_kind(std::string_view s);

struct GateConfig {
    GateKind kind = GateKind::linear;
    std::size_t n_routed_experts = 2;
    std::size_t top_k = 2;
    double aux_loss_alpha = 0.01;
    bool seq_aux = false;
    bool norm_topk_prob = false;
    /// Unset means the per-kind default: linear 0.01, mlp 0.002,
    /// cross-attention head 0.002.
    std::optional<double> gate_init_std;
    std::size_t mlp_hidden_dim = 256;
    std::size_t attn_heads = 2;
    /// Width of the encoder states; 0 means "same as the hidden width".
    std::size_t encoder_dim = 0;

    double init_std() const;
    std::size_t encoder_width(std::size_t hidden_dim) const { return encoder_dim == 0 ? hidden_dim : encoder_dim; }

    /// Throws ConfigError on an inconsistent configuration.
    void validate() const;
};

nlohmann::json to_json(const GateConfig& c);
GateConfig gate_config_from_json(const nlohmann::json& j);

/// Gate parameters for one layer. The parameter list is ordered per kind:
///   linear:          weight (E x d)
///   mlp:             fc1.weight (h x d), fc1.bias, fc2.weight (E x h), fc2.bias
///   cross_attention: q/k/v/out weights and biases, head.weight (E x d), head.bias
struct Gate {
    GateConfig config;
    std::size_t hidden_dim = 0;
    std::vector<nk::Param> params;

    std::size_t parameter_count() const;
    void set_trainable(bool trainable);
};

/// Fresh gate. Tiny-noise layers (linear weight, mlp fc2, attention head) use
/// N(0, init_std^2) with zero bias; every other weight uses N(0, 1/fan_in), mlp
/// fc1 bias likewise, and attention projection biases start at zero.
Gate init_gate(const GateConfig& config, std::size_t hidden_dim, std::mt19937_64& rng);

/// Builds an empty gate with correctly shaped zero parameters (checkpoint load).
Gate empty_gate(const GateConfig& config, std::size_t hidden_dim);

struct BatchShape {
    std::size_t batch = 1;
    std::size_t seq_len = 0;
};

/// Per-token routing outcome. Index and weight arrays are (tokens x top_k),
/// row-major, in descending score order.
struct RoutingDecision {
    std::size_t n_experts = 0;
    std::size_t top_k = 0;
    std::vector<std::size_t> topk_idx;
    std::vector<double> topk_weight;
    nk::Matrix full_scores;
    std::optional<double> aux_loss;
    bool fallback_self_attention = false;

    std::size_t tokens() const noexcept { return full_scores.rows(); }
    std::span<const std::size_t> indices(std::size_t token) const { return {topk_idx.data() + token * top_k, top_k}; }
    std::span<const double> weights(std::size_t token) const { return {topk_weight.data() + token * top_k, top_k}; }
};

/// Exact form of the combine weights: weight(i, e) = numer(i, e) / denom[i],
/// with numer zero for experts not selected by token i.
struct CombineRatios {
    nk::Matrix numer;
    std::vector<nk::DoubleDouble> denom;
};

struct GateOptions {
    bool training = true;
    std::optional<BatchShape> batch;
    /// Optional (tokens x E) 0/1 mask applied to the selection.
    const nk::Matrix* route_mask = nullptr;
    /// Optional (tokens x top_k) expert indices replacing top-k selection.
    const std::vector<std::size_t>* forced_idx = nullptr;
};

struct GateForward {
    RoutingDecision decision;
    nk::Var logits;
    nk::Var scores;
    /// (tokens x E): selected weights, zero elsewhere.
    nk::Var combine_weights;
    CombineRatios ratios;
    std::optional<nk::Var> aux_loss;
};

/// logits -> softmax -> top-k -> optional renormalization -> aux loss.
///
/// The cross-attention gate uses `encoder_states` as keys/values. Without them
/// it attends over `hidden` itself and sets `fallback_self_attention`; that
/// needs encoder width equal to the hidden width. Shape mismatches throw
/// ShapeError.
GateForward gate_forward(nk::ParamBinder& binder, const Gate& gate, nk::Var hidden,
                         std::optional<nk::Var> encoder_states, const GateOptions& options = {});

} // namespace moelab::routing
