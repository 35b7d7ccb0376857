// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/convert/convert.hpp"
#include "moelab/model/moe_layer.hpp"
#include "moelab/precision/policy.hpp"
#include "moelab/routing/gate.hpp"
#include "moelab/telemetry/utilization.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>

namespace moelab::harness {

struct ModelConfig {
    std::size_t hidden_dim = 64;
    std::size_t inner_dim = 256;
    std::size_t layers = 6;
};

struct TaskConfig {
    std::size_t count = 9;
    std::size_t components = 4;
    double mean_scale = 1.0;
    double noise_std = 0.5;
    std::size_t teacher_layers = 2;
    std::size_t teacher_inner_dim = 128;
    std::size_t instruction_tokens = 4;
    /// "backbone": teacher block l is gain(t, l) * backbone block l plus
    /// delta_scale * a random task FFN of width teacher_inner_dim (0 drops it),
    /// with log(gain) ~ N(0, gain_spread^2). "random": an independent random
    /// stack of teacher_layers blocks.
    std::string teacher = "backbone";
    double gain_spread = 1.0;
    double delta_scale = 0.0;
};

struct TrainConfig {
    double lr = 2e-4;
    std::int64_t warmup_steps = 500;
    std::int64_t total_steps = 2000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::size_t batch_tokens = 512;
    /// Tokens per sequence for the per-sequence aux loss; 0 treats the batch
    /// as one sequence.
    std::size_t seq_len = 0;
    std::uint64_t seed = 1;
    model::DispatchMode dispatch = model::DispatchMode::sparse;
    TaskConfig tasks;

    /// Throws ConfigError.
    void validate() const;
};

struct TelemetryConfig {
    std::int64_t log_interval = 50;
    telemetry::Thresholds thresholds;
    std::size_t window = 4;
    std::string bands = "scaled";
    std::size_t probe_tokens = 64;
    std::string log_dir = "runs";
    bool write_checkpoint = true;
};

struct RunConfig {
    ModelConfig model;
    routing::GateConfig gate;
    convert::ConversionConfig conversion;
    TrainConfig train;
    precision::PrecisionPolicy precision;
    TelemetryConfig telemetry;
};

/// Defaults for the desk-scale experiment: MLP gate, top-1 routing over two
/// cloned experts, micro-noise shared expert.
RunConfig default_run_config();

/// Missing sections and fields keep their defaults. Throws ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

/// 16 hex digits of FNV-1a over the canonical config with the seed removed.
std::string config_hash(const RunConfig& c);

/// Environment variable that overrides telemetry.log_dir.
inline constexpr const char* kLogDirEnv = "MOELAB_LOG_DIR";

} // namespace moelab::harness
