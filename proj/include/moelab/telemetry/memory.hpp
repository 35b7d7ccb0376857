// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace moelab::telemetry {

/// Bytes per parameter for each column. GB is 1e9 bytes.
struct MemoryPlan {
    double bf16_bytes = 2.0;
    double master_bytes = 4.0;
    double grad_bytes = 4.0;
    double optimizer_states = 2.0;
    double optimizer_state_bytes = 1.0;
    /// The compute copy is re-derived from the master each step; its column is
    /// reported but not added to the component total unless this is set.
    bool total_includes_bf16 = false;
};

/// A trainable component sized by parameter count.
struct MemoryComponent {
    std::string name;
    double params = 0.0;
};

/// A row given directly in GB (frozen weights, activations).
struct FixedMemoryRow {
    std::string name;
    double bf16_gb = 0.0;
    double master_gb = 0.0;
    double grad_gb = 0.0;
    double optimizer_gb = 0.0;
    double total_gb = 0.0;
};

struct MemoryRow {
    std::string name;
    std::optional<double> params;
    double bf16_gb = 0.0;
    double master_gb = 0.0;
    double grad_gb = 0.0;
    double optimizer_gb = 0.0;
    double total_gb = 0.0;
};

struct MemoryTable {
    std::vector<MemoryRow> rows;
    double total_gb = 0.0;
};

/// ArgumentError on a negative parameter count.
MemoryTable estimate_memory(std::span<const MemoryComponent> components, std::span<const FixedMemoryRow> fixed = {},
                            const MemoryPlan& plan = {});

/// Full-expert training of the 5B backbone: routed 2.64e9, shared 1.32e9,
/// gate 1.12e9, frozen components 20 GB, activations 10 GB.
std::vector<MemoryComponent> full_training_components();
std::vector<FixedMemoryRow> full_training_fixed_rows();

/// Request form used by the CLI: {"components": [{name, params}], "fixed":
/// [{name, bf16_gb, master_gb, grad_gb, optimizer_gb, total_gb}], "plan": {...}}.
/// Missing components and fixed rows default to the full-training preset.
MemoryTable estimate_memory(const nlohmann::json& request);

nlohmann::json to_json(const MemoryTable& t);

/// Value rounded to two decimals, as printed in tables.
double round2(double gb);

} // namespace moelab::telemetry
