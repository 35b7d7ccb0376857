// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/model/ffn.hpp"
#include "moelab/routing/gate.hpp"
#include "moelab/routing/routing_log.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace moelab::model {

/// Shared experts see every token; routed experts see the tokens the gate picks
/// for them, weighted by the gate score and nothing else.
struct MoELayer {
    std::vector<ExpertFFN> shared;
    std::vector<ExpertFFN> routed;
    routing::Gate gate;
    std::size_t layer_index = 1;

    std::size_t hidden_dim() const noexcept { return gate.hidden_dim; }
    std::size_t parameter_count() const;

    /// Throws ConfigError when routed experts are missing, disagree with the
    /// gate's expert count, or top_k exceeds them.
    void validate() const;
};

enum class DispatchMode { dense_mask, sparse };

std::string_view to_string(DispatchMode m);
DispatchMode parse_dispatch_mode(std::string_view s);

struct MoeOptions {
    bool training = true;
    std::optional<routing::BatchShape> batch;
    const nk::Matrix* route_mask = nullptr;
    const std::vector<std::size_t>* forced_idx = nullptr;
    DispatchMode dispatch = DispatchMode::dense_mask;
    routing::RoutingLogBook* log = nullptr;
    std::int64_t step = 0;
};

struct MoeForward {
    nk::Var output;
    std::optional<nk::Var> aux_loss;
    routing::RoutingDecision decision;
};

/// Sum over experts of weights(:, e) * outputs[e]. The forward value is
/// evaluated from the exact ratios in double-double and rounded once, so a
/// token whose selected weights sum to one gets back the common expert output
/// bit-for-bit when all outputs agree. Gradients: d outputs[e] = w_e * g and
/// d weights(i, e) = <outputs[e](i, :), g(i, :)>.
nk::Var combine_routed(nk::Tape& t, nk::Var weights, std::span<const nk::Var> outputs,
                       const routing::CombineRatios& ratios);

MoeForward moe_forward(nk::ParamBinder& binder, const MoELayer& layer, nk::Var x,
                       std::optional<nk::Var> encoder_states, const MoeOptions& options = {});

struct MoeResult {
    nk::Matrix output;
    routing::RoutingDecision decision;
};

/// Plain inference in wide64 (no aux loss, no gradients).
MoeResult moe_infer(const MoELayer& layer, const nk::Matrix& x, const nk::Matrix* encoder_states = nullptr,
                    const MoeOptions& options = {.training = false});

} // namespace moelab::model
