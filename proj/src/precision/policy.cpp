// SPDX-License-Identifier: Apache-2.0
#include "moelab/precision/policy.hpp"

#include "moelab/errors.hpp"
#include "moelab/precision/bf16.hpp"

#include <cmath>

namespace moelab::precision {

double PrecisionPolicy::multiplier(nk::ParamGroup g) const
{
    const auto it = lr_multiplier.find(g);
    return it == lr_multiplier.end() ? 1.0 : it->second;
}

nk::Matrix PrecisionPolicy::compute_copy(const nk::Matrix& master) const
{
    return quantize(master, compute_format);
}

PrecisionPolicy PrecisionPolicy::exact()
{
    PrecisionPolicy p;
    p.master_format = nk::NumFormat::wide64;
    p.compute_format = nk::NumFormat::wide64;
    return p;
}

nlohmann::json to_json(const PrecisionPolicy& p)
{
    nlohmann::json mult = nlohmann::json::object();
    for (const auto& [g, m] : p.lr_multiplier)
        mult[std::string(nk::to_string(g))] = m;
    return {{"master_format", std::string(nk::to_string(p.master_format))},
            {"compute_format", std::string(nk::to_string(p.compute_format))},
            {"lr_multiplier", mult}};
}

PrecisionPolicy policy_from_json(const nlohmann::json& j)
{
    PrecisionPolicy p;
    try {
        if (j.contains("master_format"))
            p.master_format = nk::parse_num_format(j.at("master_format").get<std::string>());
        if (j.contains("compute_format"))
            p.compute_format = nk::parse_num_format(j.at("compute_format").get<std::string>());
        if (j.contains("lr_multiplier"))
            for (const auto& [k, v] : j.at("lr_multiplier").items())
                p.lr_multiplier[nk::parse_param_group(k)] = v.get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("precision config: ") + e.what());
    }
    return p;
}

double accumulate(double master, double delta, nk::NumFormat master_format) noexcept
{
    if (master_format == nk::NumFormat::bf16)
        return bf16_round(master + delta).value;
    return master + delta;
}

UpdateResult apply_update(nk::Matrix& master, const nk::Matrix& delta, const PrecisionPolicy& policy)
{
    if (!master.same_shape(delta))
        throw ShapeError("apply_update: delta shape does not match master");
    for (std::size_t i = 0; i < delta.size(); ++i)
        if (!std::isfinite(delta.values()[i]))
            return {false, "non-finite update at flat index " + std::to_string(i) + "; update rejected"};
    auto m = master.values();
    const auto d = delta.values();
    for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = accumulate(m[i], d[i], policy.master_format);
    master.set_format(policy.master_format == nk::NumFormat::bf16 ? nk::NumFormat::bf16 : master.format());
    return {};
}

} // namespace moelab::precision
