// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/routing/gate.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

namespace moelab::routing {

/// Selection counts and weight mass accumulated for one layer since the last
/// flush.
struct RoutingLog {
    std::vector<std::int64_t> counts;
    std::vector<double> mass;
    std::int64_t tokens = 0;
    std::size_t top_k = 0;

    void reset();
};

/// Per-layer buffers filled by the routing hook. One writer per layer per step.
class RoutingLogBook {
public:
    /// Adds the decision's selections to `layer`'s buffer and returns the counts
    /// contributed by this decision alone.
    std::vector<std::int64_t> record(const RoutingDecision& decision, std::size_t layer, std::int64_t step);

    /// Current buffer of a layer; creates an empty one when absent.
    RoutingLog& layer(std::size_t layer);
    const std::map<std::size_t, RoutingLog>& layers() const noexcept { return logs_; }

    std::int64_t last_step() const noexcept { return last_step_; }
    void reset();

private:
    std::map<std::size_t, RoutingLog> logs_;
    std::int64_t last_step_ = -1;
};

} // namespace moelab::routing
