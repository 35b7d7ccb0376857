// SPDX-License-Identifier: Apache-2.0
#include "moelab/numkernel/params.hpp"

#include "moelab/errors.hpp"

#include <algorithm>

namespace moelab::nk {

std::string_view to_string(ParamGroup g)
{
    switch (g) {
    case ParamGroup::dense: return "dense";
    case ParamGroup::routed: return "routed";
    case ParamGroup::shared: return "shared";
    case ParamGroup::gate: return "gate";
    }
    return "dense";
}

ParamGroup parse_param_group(std::string_view s)
{
    if (s == "dense") return ParamGroup::dense;
    if (s == "routed") return ParamGroup::routed;
    if (s == "shared") return ParamGroup::shared;
    if (s == "gate") return ParamGroup::gate;
    throw ConfigError("unknown parameter group '" + std::string(s) + "'");
}

Var ParamBinder::bind(const Param& p)
{
    for (const auto& [ptr, v] : bound_)
        if (ptr == &p)
            return v;
    const bool needs = grad_all_ || p.trainable;
    Var v = tape_.leaf(quantize_ ? quantize_(p.value) : p.value, needs);
    bound_.emplace_back(&p, v);
    return v;
}

Matrix ParamBinder::grad(const Param& p) const
{
    for (const auto& [ptr, v] : bound_)
        if (ptr == &p)
            return tape_.grad(v);
    return {};
}

bool ParamBinder::bound(const Param& p) const
{
    return std::any_of(bound_.begin(), bound_.end(), [&](const auto& e) { return e.first == &p; });
}

} // namespace moelab::nk
