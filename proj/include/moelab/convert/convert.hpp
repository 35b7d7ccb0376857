// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/model/block_stack.hpp"
#include "moelab/precision/policy.hpp"
#include "moelab/routing/gate.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moelab::convert {

enum class SharedInit { verify_zero, train_micro_noise, clone_dense };

std::string_view to_string(SharedInit s);
SharedInit parse_shared_init(std::string_view s);

/// Which parameters train after conversion.
enum class FreezePolicy { gate_shared, all };

std::string_view to_string(FreezePolicy f);
FreezePolicy parse_freeze_policy(std::string_view s);

/// Routed experts are always plain copies; there is deliberately no scaling
/// field.
struct ConversionConfig {
    std::size_t n_routed = 2;
    std::size_t n_shared = 1;
    SharedInit shared_init = SharedInit::verify_zero;
    double sigma = 1e-4;
    routing::GateConfig gate;
    FreezePolicy freeze = FreezePolicy::gate_shared;

    /// Throws ConfigError. The gate's expert count must equal n_routed.
    void validate() const;
};

nlohmann::json to_json(const ConversionConfig& c);
/// Reads the conversion section; `gate` is the separately parsed gate section.
ConversionConfig conversion_config_from_json(const nlohmann::json& j, const routing::GateConfig& gate);

struct StructureVerdict {
    bool ok = true;
    std::vector<std::string> mismatches;
};

StructureVerdict check_structure(const model::FfnStructure& dense, const model::FfnStructure& expert_template);
StructureVerdict check_structure(const model::DenseFFN& dense, const model::ExpertFFN& expert_template);

/// n deep copies of the dense FFN as frozen routed experts. ArgumentError when
/// n is 0, PreconditionError when the copy would not pass check_structure.
std::vector<model::ExpertFFN> clone_routed(const model::DenseFFN& dense, std::size_t n);

/// Shared expert of the given shape. verify_zero: exact zeros.
/// train_micro_noise: weights N(0, sigma^2), biases zero. clone_dense: a copy of
/// `source` (required for that mode).
model::ExpertFFN init_shared(std::size_t hidden_dim, std::size_t inner_dim, SharedInit mode, double sigma,
                             std::mt19937_64& rng, const model::DenseFFN* source = nullptr);

/// Sets trainable flags: routed frozen and gate/shared trainable under
/// gate_shared; everything trainable under all.
void apply_freeze_policy(model::BlockStack& stack, FreezePolicy policy);

/// Replaces every dense block with an MoE layer. Randomness comes from
/// independent streams of `seed`, so the result is a pure function of
/// (dense, cfg, seed). Throws PreconditionError carrying the structure diff.
model::BlockStack convert_model(const model::BlockStack& dense, const ConversionConfig& cfg, std::uint64_t seed);

/// The dense stack an MoE stack was converted from, rebuilt from the first
/// routed expert of every layer. PreconditionError for a dense input.
model::BlockStack recover_dense(const model::BlockStack& moe);

struct EquivalenceReport {
    double max_abs_dev = 0.0;
    std::string verdict;
    std::size_t probes = 0;
};

/// Tolerance separating "near_equivalent" from "not_equivalent".
inline constexpr double kNearEquivalenceBound = 1e-3;

/// max |dense(x) - moe(x)| over all probe batches. "equivalent" at exactly 0,
/// "near_equivalent" below kNearEquivalenceBound, "not_equivalent" otherwise.
/// Every MoE layer must route to all of its experts (top_k = N_r); anything
/// else raises PreconditionError. With `compute` given, both models run on
/// that policy's compute copies.
EquivalenceReport verify_equivalence(const model::BlockStack& dense, const model::BlockStack& moe,
                                     std::span<const nk::Matrix> probes, const nk::Matrix* encoder_states = nullptr,
                                     const precision::PrecisionPolicy* compute = nullptr);

nlohmann::json to_json(const EquivalenceReport& r);

} // namespace moelab::convert
