// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/model/block_stack.hpp"
#include "moelab/model/similarity.hpp"
#include "moelab/telemetry/bands.hpp"
#include "moelab/telemetry/rebound.hpp"
#include "moelab/telemetry/series.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace moelab::telemetry {

struct HomogenizationEntry {
    std::size_t layer = 0;
    std::vector<model::PairSimilarity> pairs;
};

/// Routed-expert output similarity for every MoE layer of the stack.
std::vector<HomogenizationEntry> homogenization_report(const model::BlockStack& stack, const nk::Matrix& probes);

nlohmann::json to_json(const std::vector<HomogenizationEntry>& h);

struct ReportOptions {
    Thresholds thresholds;
    /// Trailing intervals merged for each layer's status; 0 uses all.
    std::size_t window = 4;
    Channel channel = Channel::counts;
    /// Empty selects scaled_bands(layer count).
    std::vector<Band> bands;
    ReboundParams rebound;
};

std::vector<LayerHealth> layer_statuses(const UtilizationSeries& series, const ReportOptions& opt);

/// {layers: [...], bands: {...}, rebounds: [...], homogenization: [...]}.
nlohmann::json build_report(const UtilizationSeries& series, const ReportOptions& opt,
                            const std::vector<HomogenizationEntry>& homogenization = {});

/// Plain-text status table and band summary of a report.
std::string render_report(const nlohmann::json& report);

/// Throws FormatError when `report` lacks any required key or field.
void validate_report_schema(const nlohmann::json& report);

} // namespace moelab::telemetry
