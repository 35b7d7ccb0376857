// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/numkernel/matrix.hpp"
#include "moelab/numkernel/params.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>

namespace moelab::precision {

/// Where master values live and what the forward pass sees.
///
/// A wide32 master is never re-quantized: updates accumulate at full storage
/// width and rounding happens only when compute copies are made. A bf16 master
/// is rounded onto the bf16 grid after every update, so increments below half
/// an ULP vanish.
struct PrecisionPolicy {
    nk::NumFormat master_format = nk::NumFormat::wide32;
    nk::NumFormat compute_format = nk::NumFormat::bf16;
    std::map<nk::ParamGroup, double> lr_multiplier;

    double multiplier(nk::ParamGroup g) const;

    /// Compute copy of a master tensor.
    nk::Matrix compute_copy(const nk::Matrix& master) const;

    /// Policy with every format at wide64; used by exactness checks.
    static PrecisionPolicy exact();
};

/// {"master_format", "compute_format", "lr_multiplier": {group: value}}
nlohmann::json to_json(const PrecisionPolicy& p);
PrecisionPolicy policy_from_json(const nlohmann::json& j);

struct UpdateResult {
    bool applied = true;
    std::string diagnostic;
};

/// master <- master + delta under the policy's master format. A delta with any
/// non-finite entry is rejected and the master is left untouched.
UpdateResult apply_update(nk::Matrix& master, const nk::Matrix& delta, const PrecisionPolicy& policy);

/// Scalar form of the same rule.
double accumulate(double master, double delta, nk::NumFormat master_format) noexcept;

} // namespace moelab::precision
