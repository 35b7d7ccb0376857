// SPDX-License-Identifier: Apache-2.0
#include "moelab/harness/config.hpp"

#include "moelab/errors.hpp"

#include <cstdio>

namespace moelab::harness {

void TrainConfig::validate() const
{
    if (!(lr > 0.0))
        throw ConfigError("train: lr must be positive");
    if (total_steps < 0 || warmup_steps < 0)
        throw ConfigError("train: step counts must be non-negative");
    if (total_steps > 0 && warmup_steps >= total_steps)
        throw ConfigError("train: warmup_steps must be below total_steps");
    if (batch_tokens == 0)
        throw ConfigError("train: batch_tokens must be positive");
    if (seq_len != 0 && batch_tokens % seq_len != 0)
        throw ConfigError("train: seq_len must divide batch_tokens");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
        throw ConfigError("train: betas must lie in [0, 1) and eps must be positive");
    if (weight_decay < 0.0)
        throw ConfigError("train: weight_decay must be non-negative");
    if (tasks.count == 0 || tasks.components == 0 || tasks.instruction_tokens == 0)
        throw ConfigError("train.tasks: counts must be positive");
    if (!(tasks.noise_std >= 0.0))
        throw ConfigError("train.tasks: noise_std must be non-negative");
    if (tasks.teacher != "backbone" && tasks.teacher != "random")
        throw ConfigError("train.tasks: teacher must be 'backbone' or 'random'");
    if (!(tasks.gain_spread >= 0.0) || !(tasks.delta_scale >= 0.0))
        throw ConfigError("train.tasks: gain_spread and delta_scale must be non-negative");
    if (tasks.teacher == "random" && (tasks.teacher_layers == 0 || tasks.teacher_inner_dim == 0))
        throw ConfigError("train.tasks: a random teacher needs layers and an inner width");
}

RunConfig default_run_config()
{
    RunConfig c;
    c.gate.kind = routing::GateKind::mlp;
    c.gate.n_routed_experts = 2;
    c.gate.top_k = 1;
    c.gate.aux_loss_alpha = 0.01;
    c.conversion.n_routed = 2;
    c.conversion.n_shared = 1;
    c.conversion.shared_init = convert::SharedInit::train_micro_noise;
    c.conversion.sigma = 1e-4;
    c.conversion.gate = c.gate;
    return c;
}

namespace {

template <class T>
void read(const nlohmann::json& j, const char* key, T& out)
{
    if (j.contains(key))
        out = j.at(key).get<T>();
}

} // namespace

RunConfig run_config_from_json(const nlohmann::json& j)
{
    RunConfig c = default_run_config();
    if (!j.is_object())
        throw ConfigError("config must be a JSON object");
    for (const auto& [k, _] : j.items())
        if (k != "model" && k != "conversion" && k != "gate" && k != "train" && k != "precision" &&
            k != "telemetry")
            throw ConfigError("config: unknown section '" + k + "'");
    try {
        if (j.contains("model")) {
            const auto& m = j.at("model");
            read(m, "hidden_dim", c.model.hidden_dim);
            read(m, "inner_dim", c.model.inner_dim);
            read(m, "layers", c.model.layers);
        }
        if (j.contains("gate")) {
            nlohmann::json g = routing::to_json(c.gate);
            for (const auto& [k, v] : j.at("gate").items())
                g[k] = v;
            c.gate = routing::gate_config_from_json(g);
        }
        nlohmann::json conv = j.value("conversion", nlohmann::json::object());
        if (!conv.contains("n_routed"))
            conv["n_routed"] = c.gate.n_routed_experts;
        if (!conv.contains("shared_init"))
            conv["shared_init"] = std::string(convert::to_string(c.conversion.shared_init));
        c.conversion = convert::conversion_config_from_json(conv, c.gate);
        if (j.contains("train")) {
            const auto& t = j.at("train");
            read(t, "lr", c.train.lr);
            read(t, "warmup_steps", c.train.warmup_steps);
            read(t, "total_steps", c.train.total_steps);
            if (t.contains("betas")) {
                c.train.beta1 = t.at("betas").at(0).get<double>();
                c.train.beta2 = t.at("betas").at(1).get<double>();
            }
            read(t, "eps", c.train.eps);
            read(t, "weight_decay", c.train.weight_decay);
            read(t, "batch_tokens", c.train.batch_tokens);
            read(t, "seq_len", c.train.seq_len);
            read(t, "seed", c.train.seed);
            if (t.contains("dispatch"))
                c.train.dispatch = model::parse_dispatch_mode(t.at("dispatch").get<std::string>());
            if (t.contains("tasks")) {
                const auto& k = t.at("tasks");
                read(k, "count", c.train.tasks.count);
                read(k, "components", c.train.tasks.components);
                read(k, "mean_scale", c.train.tasks.mean_scale);
                read(k, "noise_std", c.train.tasks.noise_std);
                read(k, "teacher_layers", c.train.tasks.teacher_layers);
                read(k, "teacher_inner_dim", c.train.tasks.teacher_inner_dim);
                read(k, "instruction_tokens", c.train.tasks.instruction_tokens);
                read(k, "teacher", c.train.tasks.teacher);
                read(k, "gain_spread", c.train.tasks.gain_spread);
                read(k, "delta_scale", c.train.tasks.delta_scale);
            }
        }
        if (j.contains("precision"))
            c.precision = precision::policy_from_json(j.at("precision"));
        if (j.contains("telemetry")) {
            const auto& t = j.at("telemetry");
            read(t, "log_interval", c.telemetry.log_interval);
            read(t, "t_dead", c.telemetry.thresholds.t_dead);
            read(t, "t_skew", c.telemetry.thresholds.t_skew);
            read(t, "window", c.telemetry.window);
            read(t, "bands", c.telemetry.bands);
            read(t, "probe_tokens", c.telemetry.probe_tokens);
            read(t, "log_dir", c.telemetry.log_dir);
            read(t, "write_checkpoint", c.telemetry.write_checkpoint);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.model.hidden_dim == 0 || c.model.inner_dim == 0)
        throw ConfigError("model: dims must be positive");
    if (c.telemetry.log_interval <= 0)
        throw ConfigError("telemetry: log_interval must be positive");
    c.train.validate();
    return c;
}

nlohmann::json to_json(const RunConfig& c)
{
    const auto& t = c.train;
    const auto& k = t.tasks;
    return {{"model", {{"hidden_dim", c.model.hidden_dim}, {"inner_dim", c.model.inner_dim}, {"layers", c.model.layers}}},
            {"gate", routing::to_json(c.gate)},
            {"conversion", convert::to_json(c.conversion)},
            {"train",
             {{"lr", t.lr},
              {"warmup_steps", t.warmup_steps},
              {"total_steps", t.total_steps},
              {"betas", {t.beta1, t.beta2}},
              {"eps", t.eps},
              {"weight_decay", t.weight_decay},
              {"batch_tokens", t.batch_tokens},
              {"seq_len", t.seq_len},
              {"seed", t.seed},
              {"dispatch", std::string(model::to_string(t.dispatch))},
              {"tasks",
               {{"count", k.count},
                {"components", k.components},
                {"mean_scale", k.mean_scale},
                {"noise_std", k.noise_std},
                {"teacher_layers", k.teacher_layers},
                {"teacher_inner_dim", k.teacher_inner_dim},
                {"instruction_tokens", k.instruction_tokens},
                {"teacher", k.teacher},
                {"gain_spread", k.gain_spread},
                {"delta_scale", k.delta_scale}}}}},
            {"precision", precision::to_json(c.precision)},
            {"telemetry",
             {{"log_interval", c.telemetry.log_interval},
              {"t_dead", c.telemetry.thresholds.t_dead},
              {"t_skew", c.telemetry.thresholds.t_skew},
              {"window", c.telemetry.window},
              {"bands", c.telemetry.bands},
              {"probe_tokens", c.telemetry.probe_tokens},
              {"log_dir", c.telemetry.log_dir},
              {"write_checkpoint", c.telemetry.write_checkpoint}}}};
}

std::string config_hash(const RunConfig& c)
{
    nlohmann::json j = to_json(c);
    j["train"].erase("seed");
    j["telemetry"].erase("log_dir");
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace moelab::harness
