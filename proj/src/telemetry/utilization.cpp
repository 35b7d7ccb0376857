// SPDX-License-Identifier: Apache-2.0
#include "moelab/telemetry/utilization.hpp"

#include "moelab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace moelab::telemetry {

UtilizationRecord make_record(const routing::RoutingLog& log, std::size_t layer, std::int64_t step)
{
    return UtilizationRecord{step, layer, log.counts, log.mass, log.tokens, log.top_k == 0 ? 1 : log.top_k};
}

std::string_view to_string(Channel c)
{
    return c == Channel::counts ? "counts" : "mass";
}

std::optional<std::vector<double>> shares(const UtilizationRecord& r, Channel c)
{
    std::vector<double> v(r.experts());
    double total = 0.0;
    for (std::size_t e = 0; e < v.size(); ++e) {
        v[e] = c == Channel::counts ? static_cast<double>(r.counts[e]) : r.mass[e];
        total += v[e];
    }
    if (r.tokens == 0 || total <= 0.0 || v.empty())
        return std::nullopt;
    for (double& x : v)
        x /= total;
    return v;
}

std::optional<double> minority_fraction(const UtilizationRecord& r, Channel c)
{
    const auto s = shares(r, c);
    if (!s)
        return std::nullopt;
    return *std::min_element(s->begin(), s->end());
}

std::optional<double> std_utilization(const UtilizationRecord& r, Channel c)
{
    const auto s = shares(r, c);
    if (!s)
        return std::nullopt;
    const double mean = 1.0 / static_cast<double>(s->size());
    double var = 0.0;
    for (double x : *s)
        var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(s->size()));
}

UtilizationRecord merge(std::span<const UtilizationRecord> window)
{
    if (window.empty())
        throw ArgumentError("merge: empty window");
    UtilizationRecord out = window.front();
    for (std::size_t i = 1; i < window.size(); ++i) {
        const auto& r = window[i];
        if (r.layer != out.layer || r.experts() != out.experts() || r.mass.size() != out.mass.size())
            throw ArgumentError("merge: records disagree in layer or expert count");
        for (std::size_t e = 0; e < out.counts.size(); ++e)
            out.counts[e] += r.counts[e];
        for (std::size_t e = 0; e < out.mass.size(); ++e)
            out.mass[e] += r.mass[e];
        out.tokens += r.tokens;
        out.step = r.step;
    }
    return out;
}

std::string_view to_string(LayerStatus s)
{
    switch (s) {
    case LayerStatus::healthy: return "healthy";
    case LayerStatus::skewed: return "skewed";
    case LayerStatus::deep_deadlock: return "deep_deadlock";
    }
    return "healthy";
}

LayerStatus parse_layer_status(std::string_view s)
{
    if (s == "healthy") return LayerStatus::healthy;
    if (s == "skewed") return LayerStatus::skewed;
    if (s == "deep_deadlock") return LayerStatus::deep_deadlock;
    throw ArgumentError("unknown layer status '" + std::string(s) + "'");
}

LayerStatus classify(double f, const Thresholds& th)
{
    if (f < th.t_dead)
        return LayerStatus::deep_deadlock;
    if (f < th.t_skew)
        return LayerStatus::skewed;
    return LayerStatus::healthy;
}

LayerStatus classify_layer(std::span<const UtilizationRecord> window, const Thresholds& th, Channel c)
{
    const auto f = minority_fraction(merge(window), c);
    if (!f)
        throw ArgumentError("classify_layer: window observed no tokens");
    return classify(*f, th);
}

LayerHealth layer_health(std::span<const UtilizationRecord> series, std::size_t window, const Thresholds& th,
                         Channel c)
{
    if (series.empty())
        throw ArgumentError("layer_health: empty series");
    const std::size_t w = window == 0 ? series.size() : std::min(window, series.size());
    const auto tail = series.subspan(series.size() - w);
    const UtilizationRecord m = merge(tail);
    LayerHealth h;
    h.layer = m.layer;
    h.window = w;
    h.minority_fraction_counts = minority_fraction(m, Channel::counts);
    h.minority_fraction_mass = minority_fraction(m, Channel::mass);
    h.std_utilization = std_utilization(m, c);
    const auto f = c == Channel::counts ? h.minority_fraction_counts : h.minority_fraction_mass;
    h.status = f ? classify(*f, th) : LayerStatus::healthy;
    return h;
}

} // namespace moelab::telemetry
