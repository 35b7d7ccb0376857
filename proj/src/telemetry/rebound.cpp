// SPDX-License-Identifier: Apache-2.0
#include "moelab/telemetry/rebound.hpp"

#include "moelab/errors.hpp"

#include <algorithm>

namespace moelab::telemetry {

std::string_view to_string(EventKind k)
{
    return k == EventKind::rebound ? "rebound" : "oscillation";
}

std::vector<ReboundEvent> detect_rebound(std::size_t layer, std::span<const std::int64_t> steps,
                                         std::span<const double> series, const ReboundParams& p)
{
    if (steps.size() != series.size())
        throw ArgumentError("detect_rebound: steps and series differ in length");
    std::vector<ReboundEvent> events;
    const std::size_t n = series.size();
    if (n < 3)
        return events;

    std::size_t i = 0;
    while (i < n) {
        if (series[i] >= p.t_dead) {
            ++i;
            continue;
        }
        // Inside a dip.
        const std::size_t start = i;
        double floor = series[i];
        std::size_t j = i + 1;
        for (; j < n && series[j] < p.t_dead; ++j) {
            const bool spike = series[j] - floor >= p.spike_min;
            const bool returns = j + 1 < n && series[j + 1] - floor < p.spike_min;
            if (spike && returns)
                events.push_back({layer, EventKind::oscillation, steps[start], steps[j], series[j]});
            floor = std::min(floor, series[j]);
        }
        if (j == n)
            break;
        const std::size_t dip_len = j - start;
        if (dip_len >= p.min_dip && series[j] >= p.t_health) {
            double peak = series[j];
            std::size_t k = j + 1;
            for (; k < n && series[k] >= p.t_dead; ++k)
                peak = std::max(peak, series[k]);
            events.push_back({layer, EventKind::rebound, steps[start], steps[j], peak});
            i = k;
        } else {
            i = j;
        }
    }
    return events;
}

} // namespace moelab::telemetry
