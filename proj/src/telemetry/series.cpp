// SPDX-License-Identifier: Apache-2.0
#include "moelab/telemetry/series.hpp"

#include "moelab/errors.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace moelab::telemetry {

void UtilizationSeries::add(UtilizationRecord r)
{
    by_layer_[r.layer].push_back(std::move(r));
}

const std::vector<UtilizationRecord>& UtilizationSeries::layer(std::size_t layer) const
{
    static const std::vector<UtilizationRecord> none;
    const auto it = by_layer_.find(layer);
    return it == by_layer_.end() ? none : it->second;
}

std::vector<std::size_t> UtilizationSeries::layers() const
{
    std::vector<std::size_t> out;
    for (const auto& [l, _] : by_layer_)
        out.push_back(l);
    return out;
}

void UtilizationSeries::fraction_series(std::size_t layer, Channel c, std::vector<std::int64_t>& steps,
                                        std::vector<double>& values) const
{
    steps.clear();
    values.clear();
    for (const auto& r : this->layer(layer)) {
        if (const auto f = minority_fraction(r, c)) {
            steps.push_back(r.step);
            values.push_back(*f);
        }
    }
}

void write_rows(std::ostream& os, const UtilizationRecord& r)
{
    char buf[160];
    for (std::size_t e = 0; e < r.experts(); ++e) {
        const double mass = e < r.mass.size() ? r.mass[e] : 0.0;
        std::snprintf(buf, sizeof buf, "%" PRId64 ",%zu,%zu,%" PRId64 ",%.17g,%" PRId64 "\n", r.step, r.layer, e,
                      r.counts[e], mass, r.tokens);
        os << buf;
    }
}

void write_csv(const std::filesystem::path& path, const UtilizationSeries& s)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw FormatError("cannot write " + path.string());
    os << kSeriesHeader << '\n';
    // Rows grouped by interval, then layer, then expert.
    std::map<std::int64_t, std::vector<const UtilizationRecord*>> by_step;
    for (std::size_t l : s.layers())
        for (const auto& r : s.layer(l))
            by_step[r.step].push_back(&r);
    for (const auto& [step, recs] : by_step)
        for (const auto* r : recs)
            write_rows(os, *r);
}

UtilizationSeries read_csv(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != kSeriesHeader)
        throw FormatError(path.string() + ": expected header '" + std::string(kSeriesHeader) + "'");

    std::map<std::pair<std::int64_t, std::size_t>, UtilizationRecord> recs;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::int64_t step = 0, count = 0, tokens = 0;
        std::size_t layer = 0, expert = 0;
        double mass = 0.0;
        int used = 0;
        if (std::sscanf(line.c_str(), "%" SCNd64 ",%zu,%zu,%" SCNd64 ",%lf,%" SCNd64 "%n", &step, &layer, &expert,
                        &count, &mass, &tokens, &used) != 6 ||
            static_cast<std::size_t>(used) != line.size())
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
        auto& r = recs[{step, layer}];
        r.step = step;
        r.layer = layer;
        r.tokens = tokens;
        if (expert != r.counts.size())
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": experts out of order");
        r.counts.push_back(count);
        r.mass.push_back(mass);
    }
    UtilizationSeries s;
    for (auto& [key, r] : recs) {
        std::int64_t total = 0;
        for (auto c : r.counts)
            total += c;
        r.top_k = r.tokens > 0 ? static_cast<std::size_t>(total / r.tokens) : 1;
        s.add(std::move(r));
    }
    return s;
}

Recorder::Recorder(std::int64_t interval) : interval_(interval)
{
    if (interval <= 0)
        throw ConfigError("log interval must be positive");
}

std::vector<UtilizationRecord> Recorder::flush(routing::RoutingLogBook& book, std::int64_t step,
                                               UtilizationSeries& series)
{
    std::vector<UtilizationRecord> out;
    for (const auto& [layer, log] : book.layers()) {
        if (log.counts.empty())
            continue;
        out.push_back(make_record(log, layer, step));
        series.add(out.back());
    }
    book.reset();
    return out;
}

} // namespace moelab::telemetry
