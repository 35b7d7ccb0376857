// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/routing/routing_log.hpp"
#include "moelab/telemetry/utilization.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <vector>

namespace moelab::telemetry {

inline constexpr const char* kSeriesHeader = "step,layer,expert,count,weight_mass,tokens";

/// Per-layer interval records in step order.
class UtilizationSeries {
public:
    void add(UtilizationRecord r);

    const std::vector<UtilizationRecord>& layer(std::size_t layer) const;
    std::vector<std::size_t> layers() const;
    std::size_t layer_count() const noexcept { return by_layer_.size(); }
    bool empty() const noexcept { return by_layer_.empty(); }

    /// Minority fraction of every interval of a layer (undefined intervals are
    /// skipped), with the matching steps.
    void fraction_series(std::size_t layer, Channel c, std::vector<std::int64_t>& steps,
                         std::vector<double>& values) const;

private:
    std::map<std::size_t, std::vector<UtilizationRecord>> by_layer_;
};

/// One CSV row per expert.
void write_rows(std::ostream& os, const UtilizationRecord& r);
void write_csv(const std::filesystem::path& path, const UtilizationSeries& s);

/// Reads a series written by write_csv. Throws FormatError on a bad header or
/// malformed row. top_k is recovered as sum(counts) / tokens.
UtilizationSeries read_csv(const std::filesystem::path& path);

/// Flushes routing buffers into records every `interval` steps.
class Recorder {
public:
    explicit Recorder(std::int64_t interval);

    std::int64_t interval() const noexcept { return interval_; }

    /// True when step (1-based count of completed steps) closes an interval.
    bool due(std::int64_t step) const noexcept { return interval_ > 0 && step % interval_ == 0; }

    /// Converts every buffered layer into a record stamped `step`, appends it
    /// to the series, and empties the buffers. Returns the new records.
    std::vector<UtilizationRecord> flush(routing::RoutingLogBook& book, std::int64_t step, UtilizationSeries& series);

private:
    std::int64_t interval_;
};

} // namespace moelab::telemetry
