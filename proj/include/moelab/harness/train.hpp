// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/harness/config.hpp"
#include "moelab/harness/optim.hpp"
#include "moelab/harness/tasks.hpp"
#include "moelab/model/block_stack.hpp"
#include "moelab/telemetry/series.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace moelab::harness {

struct StepLog {
    std::int64_t step = 0;
    std::size_t task = 0;
    double lr = 0.0;
    double mse = 0.0;
    double aux = 0.0;
    double total = 0.0;
    double shared_weight_norm = 0.0;
    bool applied = true;
};

/// Frobenius norm over every shared expert's fc1 and fc2 weight matrices.
double shared_weight_norm(const model::BlockStack& stack);

/// Dense stack and its conversion, both derived from the config's seed.
model::BlockStack initial_dense(const RunConfig& cfg);
model::BlockStack initial_moe(const RunConfig& cfg);

struct TrainOptions {
    /// Write config, series, report and checkpoint under run_dir.
    bool write_files = true;
    /// Overrides the run directory (normally log_dir/<hash>-s<seed>).
    std::optional<std::filesystem::path> run_dir;
    /// Called after every completed step with the 1-based step number.
    std::function<void(std::int64_t, model::BlockStack&)> on_step;
    /// Stop after this many steps (the schedule still spans total_steps).
    std::optional<std::int64_t> max_steps;
};

struct TrainResult {
    model::BlockStack model;
    telemetry::UtilizationSeries series;
    std::vector<StepLog> steps;
    nlohmann::json report;
    std::filesystem::path run_dir;
};

/// Directory a run writes to, honouring the log-dir environment override.
std::filesystem::path run_directory(const RunConfig& cfg);

/// Trains the trainable subset of `moe` on the synthetic tasks. Each step:
/// sample a task batch, forward, task MSE plus the sum of per-layer aux losses,
/// backward, AdamW through the precision policy, routing log. Throws
/// TrainingError (after dumping a checkpoint) when the loss is not finite.
TrainResult train(model::BlockStack moe, const RunConfig& cfg, const TrainOptions& opt = {});

} // namespace moelab::harness
