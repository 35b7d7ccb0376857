// SPDX-License-Identifier: Apache-2.0
#include "moelab/telemetry/memory.hpp"

#include "moelab/errors.hpp"

#include <cmath>

namespace moelab::telemetry {

namespace {

constexpr double kGB = 1e9;

} // namespace

double round2(double gb)
{
    return std::round(gb * 100.0) / 100.0;
}

MemoryTable estimate_memory(std::span<const MemoryComponent> components, std::span<const FixedMemoryRow> fixed,
                            const MemoryPlan& plan)
{
    MemoryTable t;
    for (const auto& c : components) {
        if (c.params < 0.0 || !std::isfinite(c.params))
            throw ArgumentError("estimate_memory: component '" + c.name + "' has an invalid parameter count");
        MemoryRow r;
        r.name = c.name;
        r.params = c.params;
        r.bf16_gb = c.params * plan.bf16_bytes / kGB;
        r.master_gb = c.params * plan.master_bytes / kGB;
        r.grad_gb = c.params * plan.grad_bytes / kGB;
        r.optimizer_gb = c.params * plan.optimizer_states * plan.optimizer_state_bytes / kGB;
        r.total_gb = r.master_gb + r.grad_gb + r.optimizer_gb + (plan.total_includes_bf16 ? r.bf16_gb : 0.0);
        t.total_gb += r.total_gb;
        t.rows.push_back(std::move(r));
    }
    for (const auto& f : fixed) {
        t.rows.push_back({f.name, std::nullopt, f.bf16_gb, f.master_gb, f.grad_gb, f.optimizer_gb, f.total_gb});
        t.total_gb += f.total_gb;
    }
    return t;
}

std::vector<MemoryComponent> full_training_components()
{
    return {{"Routed experts", 2.64e9}, {"Shared experts", 1.32e9}, {"Gate", 1.12e9}};
}

std::vector<FixedMemoryRow> full_training_fixed_rows()
{
    return {{"Frozen components", 20.0, 20.0, 0.0, 0.0, 20.0}, {"Activations", 10.0, 10.0, 0.0, 0.0, 10.0}};
}

MemoryTable estimate_memory(const nlohmann::json& request)
{
    try {
        MemoryPlan plan;
        if (request.contains("plan")) {
            const auto& p = request.at("plan");
            plan.bf16_bytes = p.value("bf16_bytes", plan.bf16_bytes);
            plan.master_bytes = p.value("master_bytes", plan.master_bytes);
            plan.grad_bytes = p.value("grad_bytes", plan.grad_bytes);
            plan.optimizer_states = p.value("optimizer_states", plan.optimizer_states);
            plan.optimizer_state_bytes = p.value("optimizer_state_bytes", plan.optimizer_state_bytes);
            plan.total_includes_bf16 = p.value("total_includes_bf16", plan.total_includes_bf16);
        }
        std::vector<MemoryComponent> comps;
        if (request.contains("components")) {
            for (const auto& c : request.at("components"))
                comps.push_back({c.at("name").get<std::string>(), c.at("params").get<double>()});
        } else {
            comps = full_training_components();
        }
        std::vector<FixedMemoryRow> fixed;
        if (request.contains("fixed")) {
            for (const auto& f : request.at("fixed"))
                fixed.push_back({f.at("name").get<std::string>(), f.value("bf16_gb", 0.0), f.value("master_gb", 0.0),
                                 f.value("grad_gb", 0.0), f.value("optimizer_gb", 0.0), f.value("total_gb", 0.0)});
        } else if (!request.contains("components")) {
            fixed = full_training_fixed_rows();
        }
        return estimate_memory(comps, fixed, plan);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("estimate-memory request: ") + e.what());
    }
}

nlohmann::json to_json(const MemoryTable& t)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) {
        nlohmann::json j = {{"component", r.name},
                            {"bf16_gb", round2(r.bf16_gb)},
                            {"master_gb", round2(r.master_gb)},
                            {"grad_gb", round2(r.grad_gb)},
                            {"optimizer_gb", round2(r.optimizer_gb)},
                            {"total_gb", round2(r.total_gb)}};
        j["params"] = r.params ? nlohmann::json(*r.params) : nlohmann::json(nullptr);
        rows.push_back(std::move(j));
    }
    return {{"rows", rows}, {"total_gb", round2(t.total_gb)}};
}

} // namespace moelab::telemetry
