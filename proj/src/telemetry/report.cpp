// SPDX-License-Identifier: Apache-2.0
#include "moelab/telemetry/report.hpp"

#include "moelab/errors.hpp"

#include <cstdio>
#include <sstream>

namespace moelab::telemetry {

namespace {

nlohmann::json opt_json(const std::optional<double>& v)
{
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

} // namespace

std::vector<HomogenizationEntry> homogenization_report(const model::BlockStack& stack, const nk::Matrix& probes)
{
    std::vector<HomogenizationEntry> out;
    for (const auto& b : stack.blocks) {
        const auto* m = std::get_if<model::MoELayer>(&b);
        if (!m || m->routed.size() < 2)
            continue;
        out.push_back({m->layer_index, model::expert_output_similarity(*m, probes)});
    }
    return out;
}

nlohmann::json to_json(const std::vector<HomogenizationEntry>& h)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : h) {
        nlohmann::json pairs = nlohmann::json::array();
        for (const auto& p : e.pairs)
            pairs.push_back({{"expert_a", p.expert_a},
                             {"expert_b", p.expert_b},
                             {"mean_cosine", p.mean_cosine},
                             {"tokens_used", p.tokens_used},
                             {"tokens_skipped", p.tokens_skipped},
                             {"flagged", p.flagged}});
        arr.push_back({{"layer", e.layer}, {"pairs", pairs}});
    }
    return arr;
}

std::vector<LayerHealth> layer_statuses(const UtilizationSeries& series, const ReportOptions& opt)
{
    std::vector<LayerHealth> out;
    for (std::size_t l : series.layers())
        out.push_back(layer_health(series.layer(l), opt.window, opt.thresholds, opt.channel));
    return out;
}

nlohmann::json build_report(const UtilizationSeries& series, const ReportOptions& opt,
                            const std::vector<HomogenizationEntry>& homogenization)
{
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    const auto health = layer_statuses(series, opt);
    std::vector<LayerStatus> statuses;
    for (const auto& h : health) {
        j["layers"].push_back({{"layer", h.layer},
                               {"minority_fraction_counts", opt_json(h.minority_fraction_counts)},
                               {"minority_fraction_mass", opt_json(h.minority_fraction_mass)},
                               {"std", opt_json(h.std_utilization)},
                               {"status", std::string(to_string(h.status))}});
        statuses.push_back(h.status);
    }

    // Bands need layers numbered 1..L without gaps.
    bool contiguous = !health.empty();
    for (std::size_t i = 0; i < health.size(); ++i)
        contiguous = contiguous && health[i].layer == i + 1;
    if (contiguous && statuses.size() >= 3) {
        const auto bands = opt.bands.empty() ? scaled_bands(statuses.size()) : opt.bands;
        j["bands"] = to_json(band_summary(statuses, bands));
    } else {
        j["bands"] = nlohmann::json::object();
    }

    j["rebounds"] = nlohmann::json::array();
    for (std::size_t l : series.layers()) {
        std::vector<std::int64_t> steps;
        std::vector<double> values;
        series.fraction_series(l, opt.channel, steps, values);
        for (const auto& ev : detect_rebound(l, steps, values, opt.rebound))
            j["rebounds"].push_back({{"layer", ev.layer},
                                     {"kind", std::string(to_string(ev.kind))},
                                     {"dip_start", ev.dip_start},
                                     {"recovery_step", ev.recovery_step},
                                     {"peak", ev.peak}});
    }
    j["homogenization"] = to_json(homogenization);
    return j;
}

std::string render_report(const nlohmann::json& report)
{
    validate_report_schema(report);
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-6s %-12s %-12s %-8s %s\n", "layer", "minority(n)", "minority(w)", "std",
                  "status");
    os << buf;
    auto num = [](const nlohmann::json& v) -> std::string {
        if (v.is_null())
            return "n/a";
        char b[32];
        std::snprintf(b, sizeof b, "%.4f", v.get<double>());
        return b;
    };
    for (const auto& l : report.at("layers")) {
        std::snprintf(buf, sizeof buf, "%-6zu %-12s %-12s %-8s %s\n", l.at("layer").get<std::size_t>(),
                      num(l.at("minority_fraction_counts")).c_str(), num(l.at("minority_fraction_mass")).c_str(),
                      num(l.at("std")).c_str(), l.at("status").get<std::string>().c_str());
        os << buf;
    }
    const auto& bands = report.at("bands");
    if (bands.contains("bands")) {
        os << "\nbands:";
        for (const auto& b : bands.at("bands"))
            os << ' ' << b.at("name").get<std::string>() << '[' << b.at("first").get<std::size_t>() << '-'
               << b.at("last").get<std::size_t>() << "]=" << b.at("deadlocks").get<std::size_t>();
        os << "  u_shape=" << (bands.at("u_shape").get<bool>() ? "yes" : "no") << '\n';
    }
    const auto& rb = report.at("rebounds");
    os << "rebound events: " << rb.size() << '\n';
    for (const auto& e : rb)
        os << "  layer " << e.at("layer").get<std::size_t>() << ' ' << e.at("kind").get<std::string>() << " dip@"
           << e.at("dip_start").get<std::int64_t>() << " recovery@" << e.at("recovery_step").get<std::int64_t>()
           << " peak=" << num(e.at("peak")) << '\n';
    return os.str();
}

void validate_report_schema(const nlohmann::json& r)
{
    auto need = [](const nlohmann::json& o, const char* key, const std::string& where) {
        if (!o.is_object() || !o.contains(key))
            throw FormatError("report: missing '" + std::string(key) + "' in " + where);
    };
    need(r, "layers", "report");
    need(r, "bands", "report");
    need(r, "rebounds", "report");
    need(r, "homogenization", "report");
    if (!r.at("layers").is_array() || !r.at("rebounds").is_array() || !r.at("homogenization").is_array() ||
        !r.at("bands").is_object())
        throw FormatError("report: wrong container types");
    for (const auto& l : r.at("layers"))
        for (const char* k : {"layer", "minority_fraction_counts", "minority_fraction_mass", "std", "status"})
            need(l, k, "layer entry");
    for (const auto& e : r.at("rebounds"))
        for (const char* k : {"layer", "kind", "dip_start", "recovery_step", "peak"})
            need(e, k, "rebound entry");
    for (const auto& h : r.at("homogenization")) {
        need(h, "layer", "homogenization entry");
        need(h, "pairs", "homogenization entry");
        for (const auto& p : h.at("pairs"))
            for (const char* k : {"expert_a", "expert_b", "mean_cosine"})
                need(p, k, "homogenization pair");
    }
}

} // namespace moelab::telemetry
