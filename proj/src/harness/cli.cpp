// SPDX-License-Identifier: Apache-2.0
#include "moelab/harness/cli.hpp"

#include "moelab/convert/convert.hpp"
#include "moelab/errors.hpp"
#include "moelab/harness/config.hpp"
#include "moelab/harness/train.hpp"
#include "moelab/model/checkpoint.hpp"
#include "moelab/numkernel/random.hpp"
#include "moelab/precision/audit.hpp"
#include "moelab/telemetry/memory.hpp"
#include "moelab/telemetry/report.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <ostream>

namespace moelab::harness {

namespace {

nlohmann::json read_json_file(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw ConfigError("cannot open " + path);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

RunConfig load_config(const std::string& path)
{
    return path.empty() ? default_run_config() : run_config_from_json(read_json_file(path));
}

void print_error(std::ostream& err, const std::string& kind, const std::string& message)
{
    err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

struct Args {
    std::string config;
    std::string dense;
    std::string moe;
    std::string out;
    std::string input;
    std::string series;
    std::string checkpoint;
    std::string log_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> steps;
    std::optional<std::size_t> batch_tokens;
    std::size_t probes = 16;
    std::size_t probe_tokens = 8;
    bool json = false;
};

int cmd_init_dense(const Args& a, std::ostream& out)
{
    RunConfig cfg = load_config(a.config);
    if (a.seed)
        cfg.train.seed = *a.seed;
    const auto dense = initial_dense(cfg);
    model::save_checkpoint(a.out, dense, {cfg.train.seed, cfg.precision, {}});
    out << nlohmann::json{{"checkpoint", a.out}, {"layers", dense.layers()}, {"parameters", dense.parameter_count()}}
               .dump()
        << '\n';
    return exit_ok;
}

int cmd_convert(const Args& a, std::ostream& out)
{
    RunConfig cfg = load_config(a.config);
    const std::uint64_t seed = a.seed.value_or(cfg.train.seed);
    const auto dense = model::load_checkpoint(a.dense);
    const auto moe = convert::convert_model(dense.stack, cfg.conversion, seed);
    model::save_checkpoint(a.out, moe, {seed, cfg.precision, {{"conversion", convert::to_json(cfg.conversion)}}});
    out << nlohmann::json{{"checkpoint", a.out},
                          {"layers", moe.layers()},
                          {"parameters", moe.parameter_count()},
                          {"dense_parameters", dense.stack.parameter_count()}}
               .dump()
        << '\n';
    return exit_ok;
}

int cmd_verify(const Args& a, std::ostream& out)
{
    RunConfig cfg = load_config(a.config);
    const std::uint64_t seed = a.seed.value_or(cfg.train.seed);
    const auto dense = model::load_checkpoint(a.dense);
    const auto moe = model::load_checkpoint(a.moe);
    if (a.probes == 0 || a.probe_tokens == 0)
        throw ArgumentError("verify: --probes and --tokens must be positive");
    std::vector<nk::Matrix> probes;
    for (std::size_t i = 0; i < a.probes; ++i) {
        auto rng = nk::rng_stream(seed, "verify.probe", i);
        probes.push_back(nk::normal_matrix(a.probe_tokens, dense.stack.hidden_dim, 1.0, rng));
    }
    std::optional<nk::Matrix> enc;
    if (moe.stack.is_moe()) {
        const auto& m = std::get<model::MoELayer>(moe.stack.blocks.front());
        if (m.gate.config.kind == routing::GateKind::cross_attention) {
            auto rng = nk::rng_stream(seed, "verify.encoder");
            enc = nk::normal_matrix(cfg.train.tasks.instruction_tokens,
                                    m.gate.config.encoder_width(moe.stack.hidden_dim), 1.0, rng);
        }
    }
    const auto r = convert::verify_equivalence(dense.stack, moe.stack, probes, enc ? &*enc : nullptr);
    out << nlohmann::json{{"max_abs_dev", r.max_abs_dev}, {"verdict", r.verdict}}.dump() << '\n';
    return exit_ok;
}

int cmd_train(const Args& a, std::ostream& out)
{
    RunConfig cfg = load_config(a.config);
    if (a.seed)
        cfg.train.seed = *a.seed;
    if (a.batch_tokens)
        cfg.train.batch_tokens = *a.batch_tokens;
    if (!a.log_dir.empty())
        cfg.telemetry.log_dir = a.log_dir;
    TrainOptions opt;
    if (a.steps) {
        if (*a.steps < 0)
            throw ArgumentError("train: --steps must be non-negative");
        if (*a.steps < cfg.train.total_steps)
            opt.max_steps = *a.steps;
    }
    cfg.train.validate();
    model::BlockStack moe = a.checkpoint.empty() ? initial_moe(cfg) : model::load_checkpoint(a.checkpoint).stack;
    const TrainResult r = train(std::move(moe), cfg, opt);
    const double final_loss = r.steps.empty() ? 0.0 : r.steps.back().total;
    out << nlohmann::json{{"run_dir", r.run_dir.string()},
                          {"steps", r.steps.size()},
                          {"final_total_loss", final_loss},
                          {"shared_weight_norm", shared_weight_norm(r.model)}}
               .dump()
        << '\n';
    return exit_ok;
}

int cmd_audit(const Args& a, std::ostream& out)
{
    const nlohmann::json q = read_json_file(a.input);
    out << precision::audit_queries(q).dump(2) << '\n';
    return exit_ok;
}

int cmd_report(const Args& a, std::ostream& out)
{
    RunConfig cfg = load_config(a.config);
    const auto series = telemetry::read_csv(a.series);
    telemetry::ReportOptions opt;
    opt.thresholds = cfg.telemetry.thresholds;
    opt.window = cfg.telemetry.window;
    const std::size_t layers = series.layer_count();
    if (layers >= 3)
        opt.bands = telemetry::band_preset(cfg.telemetry.bands, layers);
    nlohmann::json report = telemetry::build_report(series, opt);
    if (!a.input.empty()) {
        // Carry homogenization results over from an existing report.
        const auto prev = read_json_file(a.input);
        if (prev.contains("homogenization"))
            report["homogenization"] = prev.at("homogenization");
    }
    if (a.json)
        out << report.dump(2) << '\n';
    else
        out << telemetry::render_report(report);
    return exit_ok;
}

int cmd_memory(const Args& a, std::ostream& out)
{
    const nlohmann::json req = a.input.empty() ? nlohmann::json::object() : read_json_file(a.input);
    out << telemetry::to_json(telemetry::estimate_memory(req)).dump(2) << '\n';
    return exit_ok;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"moelab: dense-to-MoE conversion and routing diagnostics", "moelab"};
    app.require_subcommand(1);
    Args a;

    auto* init = app.add_subcommand("init-dense", "Write a random dense checkpoint");
    init->add_option("--config", a.config, "Run config JSON");
    init->add_option("--out", a.out, "Output manifest path")->required();
    init->add_option("--seed", a.seed, "Seed override");

    auto* conv = app.add_subcommand("convert", "Convert a dense checkpoint into an MoE checkpoint");
    conv->add_option("--config", a.config, "Run config JSON (conversion and gate sections)");
    conv->add_option("--dense", a.dense, "Dense checkpoint manifest")->required();
    conv->add_option("--out", a.out, "Output manifest path")->required();
    conv->add_option("--seed", a.seed, "Seed override");

    auto* ver = app.add_subcommand("verify", "Certify dense/MoE equivalence");
    ver->add_option("--config", a.config, "Run config JSON");
    ver->add_option("--dense", a.dense, "Dense checkpoint manifest")->required();
    ver->add_option("--moe", a.moe, "MoE checkpoint manifest")->required();
    ver->add_option("--probes", a.probes, "Number of probe batches");
    ver->add_option("--tokens", a.probe_tokens, "Tokens per probe batch");
    ver->add_option("--seed", a.seed, "Seed override");

    auto* tr = app.add_subcommand("train", "Train gate and shared experts on the synthetic tasks");
    tr->add_option("--config", a.config, "Run config JSON");
    tr->add_option("--checkpoint", a.checkpoint, "Start from this MoE checkpoint");
    tr->add_option("--steps", a.steps, "Stop after this many steps");
    tr->add_option("--seed", a.seed, "Seed override");
    tr->add_option("--batch-tokens", a.batch_tokens, "Tokens per step");
    tr->add_option("--log-dir", a.log_dir, "Directory holding run directories");

    auto* au = app.add_subcommand("audit-bf16", "Check updates against bfloat16 resolution");
    au->add_option("--config", a.config, "Run config JSON");
    au->add_option("--input", a.input, "JSON list of {name, magnitude, grad_norm, lr}")->required();

    auto* rep = app.add_subcommand("report", "Per-layer status table from a utilization series");
    rep->add_option("--config", a.config, "Run config JSON (telemetry section)");
    rep->add_option("--series", a.series, "utilization.csv")->required();
    rep->add_option("--report", a.input, "Existing report.json to take homogenization from");
    rep->add_flag("--json", a.json, "Print the report JSON instead of the table");

    auto* mem = app.add_subcommand("estimate-memory", "Memory table for full or partial training");
    mem->add_option("--config", a.input, "Request JSON (components, fixed rows, plan)");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        print_error(err, "usage_error", e.what());
        return exit_usage;
    }

    try {
        if (init->parsed()) return cmd_init_dense(a, out);
        if (conv->parsed()) return cmd_convert(a, out);
        if (ver->parsed()) return cmd_verify(a, out);
        if (tr->parsed()) return cmd_train(a, out);
        if (au->parsed()) return cmd_audit(a, out);
        if (rep->parsed()) return cmd_report(a, out);
        if (mem->parsed()) return cmd_memory(a, out);
    } catch (const Error& e) {
        print_error(err, e.kind(), e.what());
        return exit_error;
    } catch (const std::exception& e) {
        print_error(err, "internal_error", e.what());
        return exit_error;
    }
    print_error(err, "usage_error", "no subcommand");
    return exit_usage;
}

} // namespace moelab::harness
