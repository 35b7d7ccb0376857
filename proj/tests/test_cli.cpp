// SPDX-License-Identifier: Apache-2.0
#include "moelab/harness/cli.hpp"
#include "moelab/model/checkpoint.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace moelab;
using harness::run_cli;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

CliRun cli(std::vector<std::string> args)
{
    std::ostringstream o, e;
    CliRun r;
    r.code = run_cli(args, o, e);
    r.out = o.str();
    r.err = e.str();
    return r;
}

fs::path scratch(const std::string& name)
{
    const auto d = fs::temp_directory_path() / ("moelab_test_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write(const fs::path& p, const nlohmann::json& j)
{
    std::ofstream(p) << j.dump(2);
}

nlohmann::json small_config()
{
    return {{"model", {{"hidden_dim", 8}, {"inner_dim", 16}, {"layers", 2}}},
            {"gate", {{"kind", "linear"}, {"n_routed_experts", 2}, {"top_k", 2}}},
            {"conversion", {{"shared_init", "verify_zero"}}},
            {"train",
             {{"total_steps", 20},
              {"warmup_steps", 5},
              {"batch_tokens", 16},
              {"tasks", {{"count", 2}, {"teacher_inner_dim", 8}}}}},
            {"telemetry", {{"log_interval", 5}, {"probe_tokens", 8}}}};
}

} // namespace

TEST(Cli, HelpAndUsageErrors)
{
    const CliRun h = cli({"--help"});
    EXPECT_EQ(h.code, 0);
    EXPECT_NE(h.out.find("estimate-memory"), std::string::npos);
    const CliRun none = cli({});
    EXPECT_EQ(none.code, 2);
    EXPECT_EQ(nlohmann::json::parse(none.err)["error"], "usage_error");
    const CliRun bad = cli({"frobnicate"});
    EXPECT_EQ(bad.code, 2);
    EXPECT_EQ(nlohmann::json::parse(bad.err)["error"], "usage_error");
    const CliRun missing = cli({"verify", "--dense", "x.json"});
    EXPECT_EQ(missing.code, 2);
}

TEST(Cli, LibraryErrorsBecomeJson)
{
    const CliRun r = cli({"verify", "--dense", "/nonexistent/a.json", "--moe", "/nonexistent/b.json"});
    EXPECT_EQ(r.code, 1);
    const auto j = nlohmann::json::parse(r.err);
    EXPECT_EQ(j["error"], "format_error");
    EXPECT_TRUE(j.contains("message"));

    const auto d = scratch("badcfg");
    write(d / "cfg.json", {{"train", {{"lr", -1}}}});
    const CliRun c = cli({"train", "--config", (d / "cfg.json").string()});
    EXPECT_EQ(c.code, 1);
    EXPECT_EQ(nlohmann::json::parse(c.err)["error"], "config_error");
}

TEST(Cli, EstimateMemoryDefaultsToFullTraining)
{
    const CliRun r = cli({"estimate-memory"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["total_gb"], 80.8);
    EXPECT_EQ(j["rows"][0]["bf16_gb"], 5.28);

    const auto d = scratch("mem");
    write(d / "req.json", {{"components", {{{"name", "gate"}, {"params", 1.12e9}}}}, {"fixed", nlohmann::json::array()}});
    const CliRun g = cli({"estimate-memory", "--config", (d / "req.json").string()});
    ASSERT_EQ(g.code, 0) << g.err;
    EXPECT_EQ(nlohmann::json::parse(g.out)["rows"][0]["master_gb"], 4.48);
}

TEST(Cli, AuditBf16)
{
    const auto d = scratch("audit");
    write(d / "q.json", nlohmann::json::array({{{"name", "shared.fc1"}, {"magnitude", 115.5}, {"grad_norm", 0.005},
                                                {"lr", 0.04}}}));
    const CliRun r = cli({"audit-bf16", "--input", (d / "q.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j[0]["verdict"], "TRUNCATED");
    EXPECT_EQ(j[0]["ulp"], 0.5);
}

TEST(Cli, InitConvertVerifyPipeline)
{
    const auto d = scratch("pipeline");
    write(d / "cfg.json", small_config());
    const std::string cfg = (d / "cfg.json").string();
    const CliRun i = cli({"init-dense", "--config", cfg, "--out", (d / "dense.json").string(), "--seed", "3"});
    ASSERT_EQ(i.code, 0) << i.err;
    EXPECT_EQ(nlohmann::json::parse(i.out)["layers"], 2);
    const CliRun c = cli({"convert", "--config", cfg, "--dense", (d / "dense.json").string(), "--out",
                       (d / "moe.json").string()});
    ASSERT_EQ(c.code, 0) << c.err;
    const CliRun v = cli({"verify", "--config", cfg, "--dense", (d / "dense.json").string(), "--moe",
                       (d / "moe.json").string()});
    ASSERT_EQ(v.code, 0) << v.err;
    const auto j = nlohmann::json::parse(v.out);
    EXPECT_EQ(j["max_abs_dev"], 0.0);
    EXPECT_EQ(j["verdict"], "equivalent");

    // Converting an MoE checkpoint again is a precondition failure.
    const CliRun again = cli({"convert", "--config", cfg, "--dense", (d / "moe.json").string(), "--out",
                           (d / "moe2.json").string()});
    EXPECT_EQ(again.code, 1);
    EXPECT_EQ(nlohmann::json::parse(again.err)["error"], "precondition_error");
}

TEST(Cli, TrainThenReport)
{
    const auto d = scratch("train");
    nlohmann::json c = small_config();
    c["gate"] = {{"kind", "mlp"}, {"top_k", 1}, {"mlp_hidden_dim", 8}};
    c["conversion"] = {{"shared_init", "train_micro_noise"}};
    write(d / "cfg.json", c);
    const CliRun t = cli({"train", "--config", (d / "cfg.json").string(), "--log-dir", (d / "runs").string()});
    ASSERT_EQ(t.code, 0) << t.err;
    const auto j = nlohmann::json::parse(t.out);
    EXPECT_EQ(j["steps"], 20);
    const fs::path run = j["run_dir"].get<std::string>();
    EXPECT_EQ(run.parent_path(), d / "runs");
    ASSERT_TRUE(fs::exists(run / "utilization.csv"));

    const CliRun table = cli({"report", "--series", (run / "utilization.csv").string()});
    ASSERT_EQ(table.code, 0) << table.err;
    EXPECT_NE(table.out.find("layer"), std::string::npos);
    const CliRun js = cli({"report", "--series", (run / "utilization.csv").string(), "--report",
                        (run / "report.json").string(), "--json"});
    ASSERT_EQ(js.code, 0) << js.err;
    const auto rep = nlohmann::json::parse(js.out);
    EXPECT_EQ(rep["layers"].size(), 2u);
    EXPECT_EQ(rep["homogenization"].size(), 2u);

    const CliRun resumed = cli({"train", "--config", (d / "cfg.json").string(), "--checkpoint",
                             (run / "checkpoint.json").string(), "--steps", "3", "--log-dir",
                             (d / "runs2").string()});
    ASSERT_EQ(resumed.code, 0) << resumed.err;
    EXPECT_EQ(nlohmann::json::parse(resumed.out)["steps"], 3);
    const CliRun neg = cli({"train", "--config", (d / "cfg.json").string(), "--steps", "-1"});
    EXPECT_NE(neg.code, 0);
}
