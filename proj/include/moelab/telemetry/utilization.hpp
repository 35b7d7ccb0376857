// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/routing/routing_log.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace moelab::telemetry {

/// Expert usage of one layer over one logging interval.
struct UtilizationRecord {
    std::int64_t step = 0;
    std::size_t layer = 0;
    std::vector<std::int64_t> counts;
    std::vector<double> mass;
    std::int64_t tokens = 0;
    std::size_t top_k = 1;

    std::size_t experts() const noexcept { return counts.size(); }
};

/// Snapshot of a log buffer as a record.
UtilizationRecord make_record(const routing::RoutingLog& log, std::size_t layer, std::int64_t step);

enum class Channel { counts, mass };

std::string_view to_string(Channel c);

/// Per-expert shares on a channel; nullopt when the channel total is zero.
std::optional<std::vector<double>> shares(const UtilizationRecord& r, Channel c);

/// Smallest expert share. nullopt (undefined) when no tokens were observed.
std::optional<double> minority_fraction(const UtilizationRecord& r, Channel c = Channel::counts);

/// Population standard deviation of the expert shares.
std::optional<double> std_utilization(const UtilizationRecord& r, Channel c = Channel::counts);

/// Sum of several intervals of the same layer. ArgumentError when empty or
/// when layers or expert counts disagree; the result carries the last step.
UtilizationRecord merge(std::span<const UtilizationRecord> window);

enum class LayerStatus { healthy, skewed, deep_deadlock };

std::string_view to_string(LayerStatus s);
LayerStatus parse_layer_status(std::string_view s);

struct Thresholds {
    double t_dead = 0.10;
    double t_skew = 0.30;
};

LayerStatus classify(double minority_fraction, const Thresholds& th = {});

/// Classification of the merged window. ArgumentError on an empty window or
/// one with no observed tokens.
LayerStatus classify_layer(std::span<const UtilizationRecord> window, const Thresholds& th = {},
                           Channel c = Channel::counts);

struct LayerHealth {
    std::size_t layer = 0;
    std::optional<double> minority_fraction_counts;
    std::optional<double> minority_fraction_mass;
    std::optional<double> std_utilization;
    LayerStatus status = LayerStatus::healthy;
    std::size_t window = 0;
};

/// Health of one layer over the last `window` records of its series (all of
/// them when `window` is 0).
LayerHealth layer_health(std::span<const UtilizationRecord> series, std::size_t window, const Thresholds& th = {},
                         Channel c = Channel::counts);

} // namespace moelab::telemetry
