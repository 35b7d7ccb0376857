// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace moelab::telemetry {

enum class EventKind { rebound, oscillation };

std::string_view to_string(EventKind k);

struct ReboundEvent {
    std::size_t layer = 0;
    EventKind kind = EventKind::rebound;
    std::int64_t dip_start = 0;
    std::int64_t recovery_step = 0;
    double peak = 0.0;
};

struct ReboundParams {
    double t_dead = 0.10;
    double t_health = 0.10;
    /// Consecutive intervals below t_dead before a recovery counts as a rebound.
    std::size_t min_dip = 2;
    /// Rise above the dip's floor that counts as a spike.
    double spike_min = 0.005;
};

/// Scans one layer's minority-fraction series.
///
/// A rebound is a value at or above t_health after at least min_dip intervals
/// below t_dead; its peak is the highest value before the series drops below
/// t_dead again. An oscillation is a spike of at least spike_min over the
/// running floor of a dip that falls back to within spike_min of that floor on
/// the next interval. Series shorter than three intervals yield no events.
std::vector<ReboundEvent> detect_rebound(std::size_t layer, std::span<const std::int64_t> steps,
                                         std::span<const double> series, const ReboundParams& p = {});

} // namespace moelab::telemetry
