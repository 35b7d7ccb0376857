// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/telemetry/utilization.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moelab::telemetry {

enum class BandRole { shallow, mid, deep, other };

std::string_view to_string(BandRole r);

/// Inclusive 1-based layer range.
struct Band {
    std::string name;
    BandRole role = BandRole::other;
    std::size_t first = 1;
    std::size_t last = 1;
};

/// 1-8 / 9-22 / 23-30.
std::vector<Band> thirty_layer_bands();
/// 1-10 / 11-17 / 18-25, with 26-30 as an uncounted tail.
std::vector<Band> alt_thirty_layer_bands();
/// The 30-layer proportions applied to `layers` blocks: shallow and deep take
/// round(8/30 * L) layers each (at least one), mid the rest.
std::vector<Band> scaled_bands(std::size_t layers);

/// "thirty", "thirty_alt" or "scaled". ConfigError otherwise.
std::vector<Band> band_preset(std::string_view name, std::size_t layers);

struct BandReport {
    std::vector<Band> bands;
    std::vector<std::size_t> deadlock_counts;
    std::size_t shallow = 0;
    std::size_t mid = 0;
    std::size_t deep = 0;
    /// Shallow and deep deadlock counts each exceed the mid count.
    bool u_shape = false;
};

/// statuses[l - 1] is the status of layer l. Bands must partition
/// [1, statuses.size()] and contain exactly one shallow, mid and deep band;
/// overlaps, gaps and out-of-range bands raise ConfigError.
BandReport band_summary(std::span<const LayerStatus> statuses, std::span<const Band> bands);

nlohmann::json to_json(const BandReport& r);

} // namespace moelab::telemetry
