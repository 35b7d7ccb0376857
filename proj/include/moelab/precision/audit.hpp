// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moelab::precision {

enum class TruncationVerdict { truncated, resolved, vacuous };

std::string_view to_string(TruncationVerdict v);

struct AuditRow {
    std::string name;
    double magnitude = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
    double update = 0.0; // lr * grad_norm
    double ulp = 0.0;
    double half_ulp = 0.0;
    bool ulp_flagged = false;
    TruncationVerdict verdict = TruncationVerdict::vacuous;
};

/// A tabulated ULP next to the grid-spacing value for the same magnitude.
struct UlpCrossCheck {
    double magnitude = 0.0;
    double tabulated_ulp = 0.0;
    double computed_ulp = 0.0;
    bool agrees = false;
};

struct AuditReport {
    std::vector<AuditRow> rows;
    /// lr 0.04, grad 0.005, magnitude 115.5: the canonical truncated update.
    AuditRow worked_example;
    std::vector<UlpCrossCheck> cross_checks;
};

/// Verdict for a single (lr, grad, magnitude) triple. An update strictly below
/// half the ULP at the magnitude is TRUNCATED; a zero update is VACUOUS.
AuditRow audit_one(std::string name, double lr, double grad_norm, double magnitude);

/// Audits every magnitude. Throws ArgumentError for an empty sample list or a
/// non-positive learning rate.
AuditReport audit_truncation(double lr, double grad_norm, std::span<const double> magnitudes);

nlohmann::json to_json(const AuditRow& row);
nlohmann::json to_json(const AuditReport& report);

/// `audit-bf16` input: a JSON array of {name, magnitude, grad_norm, lr}.
/// Returns the verdict array.
nlohmann::json audit_queries(const nlohmann::json& queries);

} // namespace moelab::precision
