// SPDX-License-Identifier: Apache-2.0
#include "moelab/precision/audit.hpp"

#include "moelab/errors.hpp"
#include "moelab/precision/bf16.hpp"

#include <cmath>

namespace moelab::precision {

namespace {

// Reference rows of the tabulated truncation data: magnitude and the ULP it
// lists for that magnitude.
struct TabulatedUlp {
    double magnitude;
    double ulp;
};
constexpr TabulatedUlp kTabulated[] = {{115.5, 0.5}, {0.01, 7e-8}};

} // namespace

std::string_view to_string(TruncationVerdict v)
{
    switch (v) {
    case TruncationVerdict::truncated: return "TRUNCATED";
    case TruncationVerdict::resolved: return "RESOLVED";
    case TruncationVerdict::vacuous: return "VACUOUS";
    }
    return "VACUOUS";
}

AuditRow audit_one(std::string name, double lr, double grad_norm, double magnitude)
{
    if (!(lr > 0.0))
        throw ArgumentError("audit: learning rate must be positive");
    if (!std::isfinite(grad_norm) || !std::isfinite(magnitude))
        throw ArgumentError("audit: non-finite gradient or magnitude");
    AuditRow r;
    r.name = std::move(name);
    r.magnitude = magnitude;
    r.lr = lr;
    r.grad_norm = grad_norm;
    r.update = lr * grad_norm;
    const UlpResult u = ulp_bf16(magnitude);
    r.ulp = u.ulp;
    r.half_ulp = 0.5 * u.ulp;
    r.ulp_flagged = u.flagged;
    if (r.update == 0.0)
        r.verdict = TruncationVerdict::vacuous;
    else if (std::abs(r.update) < r.half_ulp)
        r.verdict = TruncationVerdict::truncated;
    else
        r.verdict = TruncationVerdict::resolved;
    return r;
}

AuditReport audit_truncation(double lr, double grad_norm, std::span<const double> magnitudes)
{
    if (magnitudes.empty())
        throw ArgumentError("audit: no weight magnitudes given");
    AuditReport rep;
    for (std::size_t i = 0; i < magnitudes.size(); ++i)
        rep.rows.push_back(audit_one("sample_" + std::to_string(i), lr, grad_norm, magnitudes[i]));
    rep.worked_example = audit_one("reference_115.5", 0.04, 0.005, 115.5);
    for (const auto& t : kTabulated) {
        const double computed = ulp_bf16(t.magnitude).ulp;
        rep.cross_checks.push_back({t.magnitude, t.ulp, computed, std::abs(t.ulp - computed) <= 0.5 * computed});
    }
    return rep;
}

nlohmann::json to_json(const AuditRow& r)
{
    return {{"name", r.name},         {"magnitude", r.magnitude}, {"lr", r.lr},
            {"grad_norm", r.grad_norm}, {"update", r.update},       {"ulp", r.ulp},
            {"half_ulp", r.half_ulp},   {"ulp_flagged", r.ulp_flagged},
            {"verdict", std::string(to_string(r.verdict))}};
}

nlohmann::json to_json(const AuditReport& rep)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows)
        rows.push_back(to_json(r));
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : rep.cross_checks)
        checks.push_back({{"magnitude", c.magnitude},
                          {"tabulated_ulp", c.tabulated_ulp},
                          {"computed_ulp", c.computed_ulp},
                          {"agrees", c.agrees}});
    return {{"rows", rows}, {"worked_example", to_json(rep.worked_example)}, {"ulp_cross_checks", checks}};
}

nlohmann::json audit_queries(const nlohmann::json& queries)
{
    if (!queries.is_array())
        throw FormatError("audit-bf16 input must be a JSON array");
    if (queries.empty())
        throw ArgumentError("audit: no weight magnitudes given");
    nlohmann::json out = nlohmann::json::array();
    for (const auto& q : queries) {
        try {
            out.push_back(to_json(audit_one(q.value("name", std::string{}), q.at("lr").get<double>(),
                                            q.at("grad_norm").get<double>(), q.at("magnitude").get<double>())));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("audit-bf16 entry: ") + e.what());
        }
    }
    return out;
}

} // namespace moelab::precision
