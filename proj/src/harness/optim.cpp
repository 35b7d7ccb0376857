// SPDX-License-Identifier: Apache-2.0
#include "moelab/harness/optim.hpp"

#include "moelab/errors.hpp"
#include "moelab/precision/bf16.hpp"

#include <cmath>
#include <numbers>

namespace moelab::harness {

double lr_schedule(std::int64_t t, const TrainConfig& cfg)
{
    if (t < 0 || t > cfg.total_steps)
        throw ArgumentError("lr_schedule: step " + std::to_string(t) + " outside [0, " +
                            std::to_string(cfg.total_steps) + "]");
    if (t < cfg.warmup_steps)
        return cfg.lr * static_cast<double>(t) / static_cast<double>(cfg.warmup_steps);
    const double span = static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    if (span <= 0.0)
        return cfg.lr;
    const double progress = static_cast<double>(t - cfg.warmup_steps) / span;
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

StepOutcome adamw_step(std::span<nk::Param* const> params, std::span<const nk::Matrix> grads,
                       OptimizerState& state, const TrainConfig& cfg, double lr_t,
                       const precision::PrecisionPolicy& policy)
{
    if (params.size() != grads.size())
        throw ShapeError("adamw: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
    if (lr_t < 0.0)
        throw ArgumentError("adamw: negative learning rate");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->value.same_shape(grads[i]))
            throw ShapeError("adamw: gradient shape mismatch for " + params[i]->name);
        if (!grads[i].all_finite())
            return {false, "non-finite gradient for " + params[i]->name + "; step skipped"};
    }
    if (state.m.empty()) {
        for (const nk::Param* p : params) {
            state.m.push_back(nk::Matrix::zeros_like(p->value));
            state.v.push_back(nk::Matrix::zeros_like(p->value));
        }
    }
    if (state.m.size() != params.size())
        throw ShapeError("adamw: optimizer state tracks a different parameter set");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    const bool bf16_state = policy.master_format == nk::NumFormat::bf16;

    StepOutcome out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        nk::Param& p = *params[i];
        const double lr = lr_t * policy.multiplier(p.group);
        auto m = state.m[i].values();
        auto v = state.v[i].values();
        const auto g = grads[i].values();
        const auto w = p.value.values();
        nk::Matrix delta(p.value.rows(), p.value.cols());
        auto d = delta.values();
        for (std::size_t k = 0; k < g.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            if (bf16_state) {
                m[k] = precision::bf16_round(m[k]).value;
                v[k] = precision::bf16_round(v[k]).value;
            }
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            d[k] = -lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w[k]);
        }
        const auto r = precision::apply_update(p.value, delta, policy);
        if (!r.applied) {
            out.applied = false;
            out.diagnostic = p.name + ": " + r.diagnostic;
        }
    }
    return out;
}

} // namespace moelab::harness
