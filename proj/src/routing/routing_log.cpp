// SPDX-License-Identifier: Apache-2.0
#include "moelab/routing/routing_log.hpp"

#include <algorithm>

namespace moelab::routing {

void RoutingLog::reset()
{
    std::fill(counts.begin(), counts.end(), 0);
    std::fill(mass.begin(), mass.end(), 0.0);
    tokens = 0;
}

std::vector<std::int64_t> RoutingLogBook::record(const RoutingDecision& decision, std::size_t layer,
                                                 std::int64_t step)
{
    RoutingLog& log = logs_[layer];
    if (log.counts.size() < decision.n_experts) {
        log.counts.resize(decision.n_experts, 0);
        log.mass.resize(decision.n_experts, 0.0);
    }
    log.top_k = decision.top_k;
    std::vector<std::int64_t> emitted(decision.n_experts, 0);
    for (std::size_t i = 0; i < decision.tokens(); ++i) {
        const auto idx = decision.indices(i);
        const auto w = decision.weights(i);
        for (std::size_t s = 0; s < idx.size(); ++s) {
            ++emitted[idx[s]];
            log.mass[idx[s]] += w[s];
        }
    }
    for (std::size_t e = 0; e < emitted.size(); ++e)
        log.counts[e] += emitted[e];
    log.tokens += static_cast<std::int64_t>(decision.tokens());
    last_step_ = step;
    return emitted;
}

RoutingLog& RoutingLogBook::layer(std::size_t layer)
{
    return logs_[layer];
}

void RoutingLogBook::reset()
{
    logs_.clear();
}

} // namespace moelab::routing
