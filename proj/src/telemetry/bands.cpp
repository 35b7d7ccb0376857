// SPDX-License-Identifier: Apache-2.0
#include "moelab/telemetry/bands.hpp"

#include "moelab/errors.hpp"

#include <algorithm>
#include <cmath>

namespace moelab::telemetry {

std::string_view to_string(BandRole r)
{
    switch (r) {
    case BandRole::shallow: return "shallow";
    case BandRole::mid: return "mid";
    case BandRole::deep: return "deep";
    case BandRole::other: return "other";
    }
    return "other";
}

std::vector<Band> thirty_layer_bands()
{
    return {{"shallow", BandRole::shallow, 1, 8}, {"mid", BandRole::mid, 9, 22}, {"deep", BandRole::deep, 23, 30}};
}

std::vector<Band> alt_thirty_layer_bands()
{
    return {{"shallow", BandRole::shallow, 1, 10},
            {"mid", BandRole::mid, 11, 17},
            {"deep", BandRole::deep, 18, 25},
            {"tail", BandRole::other, 26, 30}};
}

std::vector<Band> scaled_bands(std::size_t layers)
{
    if (layers < 3)
        throw ConfigError("scaled bands need at least 3 layers");
    std::size_t edge = static_cast<std::size_t>(std::lround(8.0 / 30.0 * static_cast<double>(layers)));
    edge = std::clamp<std::size_t>(edge, 1, (layers - 1) / 2);
    return {{"shallow", BandRole::shallow, 1, edge},
            {"mid", BandRole::mid, edge + 1, layers - edge},
            {"deep", BandRole::deep, layers - edge + 1, layers}};
}

std::vector<Band> band_preset(std::string_view name, std::size_t layers)
{
    if (name == "thirty") return thirty_layer_bands();
    if (name == "thirty_alt") return alt_thirty_layer_bands();
    if (name == "scaled") return scaled_bands(layers);
    throw ConfigError("unknown band preset '" + std::string(name) + "'");
}

BandReport band_summary(std::span<const LayerStatus> statuses, std::span<const Band> bands)
{
    const std::size_t L = statuses.size();
    std::vector<int> owner(L + 1, -1);
    int shallow = -1, mid = -1, deep = -1;
    for (std::size_t b = 0; b < bands.size(); ++b) {
        const Band& band = bands[b];
        if (band.first < 1 || band.last < band.first || band.last > L)
            throw ConfigError("band '" + band.name + "' range " + std::to_string(band.first) + "-" +
                              std::to_string(band.last) + " is outside layers 1-" + std::to_string(L));
        for (std::size_t l = band.first; l <= band.last; ++l) {
            if (owner[l] != -1)
                throw ConfigError("bands '" + bands[static_cast<std::size_t>(owner[l])].name + "' and '" + band.name +
                                  "' overlap at layer " + std::to_string(l));
            owner[l] = static_cast<int>(b);
        }
        int* slot = band.role == BandRole::shallow ? &shallow
                    : band.role == BandRole::mid   ? &mid
                    : band.role == BandRole::deep  ? &deep
                                                   : nullptr;
        if (slot) {
            if (*slot != -1)
                throw ConfigError("more than one " + std::string(to_string(band.role)) + " band");
            *slot = static_cast<int>(b);
        }
    }
    for (std::size_t l = 1; l <= L; ++l)
        if (owner[l] == -1)
            throw ConfigError("layer " + std::to_string(l) + " is not covered by any band");
    if (shallow == -1 || mid == -1 || deep == -1)
        throw ConfigError("bands need one shallow, one mid and one deep band");

    BandReport r;
    r.bands.assign(bands.begin(), bands.end());
    r.deadlock_counts.assign(bands.size(), 0);
    for (std::size_t l = 1; l <= L; ++l)
        if (statuses[l - 1] == LayerStatus::deep_deadlock)
            ++r.deadlock_counts[static_cast<std::size_t>(owner[l])];
    r.shallow = r.deadlock_counts[static_cast<std::size_t>(shallow)];
    r.mid = r.deadlock_counts[static_cast<std::size_t>(mid)];
    r.deep = r.deadlock_counts[static_cast<std::size_t>(deep)];
    r.u_shape = r.shallow > r.mid && r.deep > r.mid;
    return r;
}

nlohmann::json to_json(const BandReport& r)
{
    nlohmann::json bands = nlohmann::json::array();
    for (std::size_t b = 0; b < r.bands.size(); ++b)
        bands.push_back({{"name", r.bands[b].name},
                         {"role", std::string(to_string(r.bands[b].role))},
                         {"first", r.bands[b].first},
                         {"last", r.bands[b].last},
                         {"deadlocks", r.deadlock_counts[b]}});
    return {{"bands", bands},
            {"shallow", r.shallow},
            {"mid", r.mid},
            {"deep", r.deep},
            {"u_shape", r.u_shape}};
}

} // namespace moelab::telemetry
