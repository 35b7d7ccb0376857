// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/harness/config.hpp"
#include "moelab/numkernel/params.hpp"
#include "moelab/precision/policy.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace moelab::harness {

/// Linear warmup to cfg.lr, then cosine decay to zero at total_steps.
double lr_schedule(std::int64_t t, const TrainConfig& cfg);

struct OptimizerState {
    std::vector<nk::Matrix> m;
    std::vector<nk::Matrix> v;
    std::int64_t t = 0;
};

struct StepOutcome {
    bool applied = true;
    std::string diagnostic;
};

/// One decoupled-weight-decay Adam step over `params` (grads[i] belongs to
/// params[i]). Each delta goes through precision::apply_update under
/// `policy`, scaled by the policy's per-group lr multiplier. Any non-finite
/// gradient skips the whole step, leaving params and state untouched.
StepOutcome adamw_step(std::span<nk::Param* const> params, std::span<const nk::Matrix> grads,
                       OptimizerState& state, const TrainConfig& cfg, double lr_t,
                       const precision::PrecisionPolicy& policy);

} // namespace moelab::harness
