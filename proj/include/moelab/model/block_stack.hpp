// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/model/ffn.hpp"
#include "moelab/model/moe_layer.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace moelab::model {

using Block = std::variant<DenseFFN, MoELayer>;

/// L residual blocks, h <- h + block(h). All blocks are dense or all are MoE.
struct BlockStack {
    std::size_t hidden_dim = 0;
    std::vector<Block> blocks;

    bool is_moe() const noexcept;
    std::size_t layers() const noexcept { return blocks.size(); }
    std::size_t parameter_count() const;

    /// Throws ConfigError on mixed block kinds or mismatched widths.
    void validate() const;
};

/// Random dense stack: each block an independent random_dense_ffn.
BlockStack random_dense_stack(std::size_t layers, std::size_t hidden_dim, std::size_t inner_dim,
                              std::mt19937_64& rng);

struct NamedParam {
    std::string path;
    nk::Param* param = nullptr;
};

struct ConstNamedParam {
    std::string path;
    const nk::Param* param = nullptr;
};

/// Every parameter with a stable dotted path, in checkpoint order:
///   blocks.<l>.ffn.<name>, or for MoE blocks
///   blocks.<l>.shared.<i>.<name>, blocks.<l>.routed.<j>.<name>, blocks.<l>.gate.<name>
std::vector<NamedParam> named_parameters(BlockStack& stack);
std::vector<ConstNamedParam> named_parameters(const BlockStack& stack);

struct StackForward {
    nk::Var output;
    std::vector<nk::Var> aux_losses;
    std::vector<routing::RoutingDecision> decisions;
};

/// Records the stack on the binder's tape. `options` applies to every MoE block.
StackForward stack_forward(nk::ParamBinder& binder, const BlockStack& stack, nk::Var x,
                           std::optional<nk::Var> encoder_states, const MoeOptions& options = {});

/// Plain inference in wide64.
nk::Matrix stack_infer(const BlockStack& stack, const nk::Matrix& x, const nk::Matrix* encoder_states = nullptr,
                       const MoeOptions& options = {.training = false});

} // namespace moelab::model
