// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include "moelab/convert/convert.hpp"
#include "moelab/errors.hpp"
#include "moelab/harness/optim.hpp"
#include "moelab/harness/tasks.hpp"
#include "moelab/harness/train.hpp"
#include "moelab/model/checkpoint.hpp"
#include "moelab/numkernel/random.hpp"
#include "moelab/precision/bf16.hpp"
#include "moelab/telemetry/report.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace moelab;
using namespace moelab::harness;
using nk::Matrix;

namespace {

std::vector<double> vals(const Matrix& m)
{
    return {m.values().begin(), m.values().end()};
}

RunConfig tiny_config()
{
    RunConfig c = default_run_config();
    c.model.hidden_dim = 8;
    c.model.inner_dim = 16;
    c.model.layers = 2;
    c.gate.mlp_hidden_dim = 8;
    c.conversion.gate = c.gate;
    c.train.total_steps = 40;
    c.train.warmup_steps = 10;
    c.train.batch_tokens = 32;
    c.train.tasks.count = 3;
    c.train.tasks.teacher_inner_dim = 8;
    c.telemetry.log_interval = 10;
    c.telemetry.probe_tokens = 8;
    return c;
}

// Scalar Adam with decoupled decay, written out term by term.
struct ScalarAdam {
    double m = 0, v = 0;
    int t = 0;
    double step(double w, double g, double lr, const TrainConfig& c)
    {
        ++t;
        m = c.beta1 * m + (1 - c.beta1) * g;
        v = c.beta2 * v + (1 - c.beta2) * g * g;
        const double mh = m / (1 - std::pow(c.beta1, t));
        const double vh = v / (1 - std::pow(c.beta2, t));
        return w - lr * (mh / (std::sqrt(vh) + c.eps) + c.weight_decay * w);
    }
};

} // namespace

TEST(Config, JsonRoundTripAndHash)
{
    RunConfig c = default_run_config();
    c.train.lr = 3e-4;
    c.train.tasks.gain_spread = 0.7;
    c.gate.top_k = 1;
    const RunConfig back = run_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_EQ(config_hash(c).size(), 16u);

    RunConfig other_seed = c;
    other_seed.train.seed = 77;
    EXPECT_EQ(config_hash(other_seed), config_hash(c));
    RunConfig other_lr = c;
    other_lr.train.lr = 1e-3;
    EXPECT_NE(config_hash(other_lr), config_hash(c));
}

TEST(Config, MissingFieldsKeepDefaultsAndBadValuesThrow)
{
    const RunConfig d = run_config_from_json(nlohmann::json::object());
    EXPECT_EQ(to_json(d), to_json(default_run_config()));
    EXPECT_THROW(run_config_from_json({{"train", {{"lr", -1.0}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"train", {{"warmup_steps", 5000}, {"total_steps", 100}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"train", {{"tasks", {{"teacher", "oracle"}}}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"nonsense", 1}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"train", {{"lr", "fast"}}}}), ConfigError);
}

TEST(Config, DefaultsDescribeTheDeskExperiment)
{
    const RunConfig c = default_run_config();
    EXPECT_EQ(c.gate.kind, routing::GateKind::mlp);
    EXPECT_EQ(c.gate.top_k, 1u);
    EXPECT_EQ(c.gate.aux_loss_alpha, 0.01);
    EXPECT_EQ(c.model.layers, 6u);
    EXPECT_EQ(c.model.hidden_dim, 64u);
    EXPECT_EQ(c.conversion.shared_init, convert::SharedInit::train_micro_noise);
    EXPECT_EQ(c.conversion.sigma, 1e-4);
    EXPECT_EQ(c.train.lr, 2e-4);
    EXPECT_EQ(c.train.warmup_steps, 500);
    EXPECT_EQ(c.telemetry.log_interval, 50);
}

TEST(Schedule, WarmupThenCosine)
{
    TrainConfig c;
    c.lr = 2e-4;
    c.warmup_steps = 500;
    c.total_steps = 2000;
    EXPECT_EQ(lr_schedule(0, c), 0.0);
    EXPECT_DOUBLE_EQ(lr_schedule(250, c), 1e-4);
    EXPECT_DOUBLE_EQ(lr_schedule(500, c), 2e-4);
    EXPECT_NEAR(lr_schedule(1250, c), 1e-4, 1e-18);
    EXPECT_NEAR(lr_schedule(2000, c), 0.0, 1e-20);
    for (std::int64_t t = 500; t < 2000; ++t)
        EXPECT_GE(lr_schedule(t, c), lr_schedule(t + 1, c));
    EXPECT_THROW(lr_schedule(2001, c), ArgumentError);
    EXPECT_THROW(lr_schedule(-1, c), ArgumentError);
}

TEST(AdamW, MatchesScalarReference)
{
    TrainConfig c;
    c.weight_decay = 0.01;
    precision::PrecisionPolicy pol;
    pol.master_format = nk::NumFormat::wide64;
    pol.compute_format = nk::NumFormat::wide64;
    std::mt19937_64 rng(1);
    nk::Param p;
    p.name = "w";
    p.value = oracle::random_matrix(3, 4, rng);
    std::vector<ScalarAdam> ref(12);
    std::vector<double> w = vals(p.value);
    OptimizerState st;
    nk::Param* ps[] = {&p};
    for (int step = 0; step < 25; ++step) {
        const Matrix g = oracle::random_matrix(3, 4, rng);
        const double lr = 1e-2 * (step + 1);
        std::vector<Matrix> gs{g};
        ASSERT_TRUE(adamw_step(ps, gs, st, c, lr, pol).applied);
        for (std::size_t k = 0; k < 12; ++k)
            w[k] = ref[k].step(w[k], g.values()[k], lr, c);
    }
    for (std::size_t k = 0; k < 12; ++k)
        EXPECT_NEAR(p.value.values()[k], w[k], 1e-14 * std::max(1.0, std::abs(w[k])));
}

TEST(AdamW, NonFiniteGradientSkipsTheStep)
{
    TrainConfig c;
    precision::PrecisionPolicy pol;
    nk::Param p;
    p.name = "w";
    p.value = Matrix(1, 2, 1.0);
    Matrix g(1, 2, 0.5);
    g(0, 1) = NAN;
    OptimizerState st;
    nk::Param* ps[] = {&p};
    std::vector<Matrix> gs{g};
    const StepOutcome o = adamw_step(ps, gs, st, c, 1e-3, pol);
    EXPECT_FALSE(o.applied);
    EXPECT_NE(o.diagnostic.find("non-finite"), std::string::npos);
    EXPECT_EQ(p.value(0, 0), 1.0);
    EXPECT_EQ(st.t, 0);
    std::vector<Matrix> wrong{Matrix(2, 2)};
    EXPECT_THROW(adamw_step(ps, wrong, st, c, 1e-3, pol), ShapeError);
}

TEST(AdamW, Bf16PolicyKeepsMomentsOnTheGridAndMultipliersScale)
{
    TrainConfig c;
    precision::PrecisionPolicy pol;
    pol.master_format = nk::NumFormat::bf16;
    pol.compute_format = nk::NumFormat::bf16;
    std::mt19937_64 rng(2);
    nk::Param p;
    p.name = "w";
    p.value = Matrix(2, 3, 1.0);
    OptimizerState st;
    nk::Param* ps[] = {&p};
    for (int i = 0; i < 5; ++i) {
        std::vector<Matrix> gs{oracle::random_matrix(2, 3, rng)};
        adamw_step(ps, gs, st, c, 1e-2, pol);
    }
    for (double m : st.m[0].values())
        EXPECT_EQ(precision::bf16_round(m).value, m);
    for (double w : p.value.values())
        EXPECT_EQ(precision::bf16_round(w).value, w);

    precision::PrecisionPolicy wide;
    wide.master_format = nk::NumFormat::wide64;
    wide.lr_multiplier[nk::ParamGroup::shared] = 10.0;
    nk::Param a, b;
    a.value = b.value = Matrix(1, 1, 0.0);
    b.group = nk::ParamGroup::shared;
    OptimizerState sa, sb;
    nk::Param* pa[] = {&a};
    nk::Param* pb[] = {&b};
    std::vector<Matrix> g1{Matrix(1, 1, 1.0)};
    adamw_step(pa, g1, sa, c, 1e-3, wide);
    adamw_step(pb, g1, sb, c, 1e-3, wide);
    EXPECT_NEAR(b.value(0, 0), 10.0 * a.value(0, 0), 1e-15);
}

TEST(Tasks, DeterministicInSeedAndStep)
{
    const RunConfig c = tiny_config();
    const auto dense = initial_dense(c);
    const auto t1 = make_tasks(5, 8, 8, c.train.tasks, &dense);
    const auto t2 = make_tasks(5, 8, 8, c.train.tasks, &dense);
    ASSERT_EQ(t1.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(vals(t1[i].means), vals(t2[i].means));
        const auto a = gen_task_batch(t1[i], 16, 5, 9);
        const auto b = gen_task_batch(t2[i], 16, 5, 9);
        EXPECT_EQ(vals(a.tokens), vals(b.tokens));
        EXPECT_EQ(vals(a.targets), vals(b.targets));
        EXPECT_EQ(vals(a.targets), vals(model::stack_infer(t1[i].teacher, a.tokens)));
        EXPECT_NE(vals(gen_task_batch(t1[i], 16, 5, 10).tokens), vals(a.tokens));
    }
    EXPECT_NE(vals(t1[0].means), vals(t1[1].means));
    EXPECT_THROW(gen_task_batch(t1[0], 0, 5, 1), ArgumentError);
    EXPECT_THROW(make_task(0, 5, 8, 8, c.train.tasks, &dense), ArgumentError);
    EXPECT_THROW(make_task(1, 5, 8, 8, c.train.tasks, nullptr), PreconditionError);
    std::vector<std::size_t> seen(3, 0);
    for (std::uint64_t s = 0; s < 300; ++s) {
        const std::size_t k = task_for_step(5, s, 3);
        ASSERT_LT(k, 3u);
        ++seen[k];
        EXPECT_EQ(k, task_for_step(5, s, 3));
    }
    for (auto n : seen)
        EXPECT_GT(n, 60u);
}

TEST(Tasks, FusedTeacherBlockIsGainTimesBlockPlusScaledDelta)
{
    auto rng = nk::rng_stream(3, "t");
    const auto base = model::random_dense_ffn(6, 10, rng);
    const auto delta = model::random_dense_ffn(6, 4, rng);
    const auto fused = fuse_teacher_block(base, 1.7, &delta, 0.3);
    EXPECT_EQ(fused.inner_dim(), 14u);
    std::mt19937_64 xr(4);
    const Matrix x = oracle::random_matrix(5, 6, xr);
    const Matrix got = model::ffn_forward(fused, x);
    const Matrix b = model::ffn_forward(base, x);
    const Matrix d = model::ffn_forward(delta, x);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            EXPECT_NEAR(got(i, j), 1.7 * b(i, j) + 0.3 * d(i, j), 1e-12);
    const auto plain = fuse_teacher_block(base, 2.0, nullptr, 0.0);
    EXPECT_EQ(plain.inner_dim(), 10u);
    EXPECT_FALSE(plain.fc1_weight.trainable);
    const auto wrong = model::random_dense_ffn(5, 4, rng);
    EXPECT_THROW(fuse_teacher_block(base, 1.0, &wrong, 1.0), ShapeError);
}

TEST(Tasks, RandomTeacherIgnoresBackbone)
{
    RunConfig c = tiny_config();
    c.train.tasks.teacher = "random";
    const auto t = make_task(2, 3, 8, 8, c.train.tasks);
    EXPECT_EQ(t.teacher.layers(), c.train.tasks.teacher_layers);
}

TEST(Train, ShortRunTrainsOnlyGateAndShared)
{
    const RunConfig c = tiny_config();
    const auto moe = initial_moe(c);
    TrainOptions o;
    o.write_files = false;
    const TrainResult r = train(moe, c, o);
    ASSERT_EQ(r.steps.size(), 40u);
    EXPECT_EQ(r.steps.front().step, 1);
    EXPECT_GT(r.steps.back().shared_weight_norm, r.steps.front().shared_weight_norm);
    for (const auto& s : r.steps) {
        EXPECT_TRUE(std::isfinite(s.total));
        EXPECT_DOUBLE_EQ(s.total, s.mse + s.aux);
    }
    const auto before = model::named_parameters(moe);
    const auto after = model::named_parameters(r.model);
    bool gate_moved = false;
    for (std::size_t i = 0; i < before.size(); ++i) {
        const bool same = vals(before[i].param->value) == vals(after[i].param->value);
        if (before[i].path.find(".routed.") != std::string::npos)
            EXPECT_TRUE(same) << before[i].path;
        else if (before[i].path.find(".gate.") != std::string::npos)
            gate_moved = gate_moved || !same;
    }
    EXPECT_TRUE(gate_moved);
    EXPECT_EQ(r.series.layer_count(), 2u);
    EXPECT_EQ(r.series.layer(1).size(), 4u);
    EXPECT_NO_THROW(telemetry::validate_report_schema(r.report));
}

TEST(Train, WritesRunDirectory)
{
    const RunConfig c = tiny_config();
    const auto dir = std::filesystem::temp_directory_path() / "moelab_test_train_run";
    std::filesystem::remove_all(dir);
    TrainOptions o;
    o.run_dir = dir;
    const TrainResult r = train(initial_moe(c), c, o);
    EXPECT_EQ(r.run_dir, dir);
    for (const char* f : {"config.json", "utilization.csv", "losses.csv", "report.json", "checkpoint.json",
                          "checkpoint.bin"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    const auto series = telemetry::read_csv(dir / "utilization.csv");
    EXPECT_EQ(series.layer(2).size(), 4u);
    const auto ck = model::load_checkpoint(dir / "checkpoint.json");
    EXPECT_EQ(ck.stack.layers(), 2u);
}

TEST(Train, ZeroSharedUnderBf16StaysZero)
{
    RunConfig c = tiny_config();
    c.conversion.shared_init = convert::SharedInit::verify_zero;
    c.precision.master_format = nk::NumFormat::bf16;
    TrainOptions o;
    o.write_files = false;
    const TrainResult r = train(initial_moe(c), c, o);
    for (const auto& s : r.steps)
        EXPECT_EQ(s.shared_weight_norm, 0.0);
}

TEST(Train, RejectsDenseInputAndHonoursMaxSteps)
{
    const RunConfig c = tiny_config();
    EXPECT_THROW(train(initial_dense(c), c, {.write_files = false}), PreconditionError);
    TrainOptions o;
    o.write_files = false;
    o.max_steps = 5;
    std::int64_t calls = 0;
    o.on_step = [&](std::int64_t, model::BlockStack&) { ++calls; };
    EXPECT_EQ(train(initial_moe(c), c, o).steps.size(), 5u);
    EXPECT_EQ(calls, 5);
}

TEST(Train, NonFiniteLossRaisesTrainingError)
{
    const RunConfig c = tiny_config();
    const auto dir = std::filesystem::temp_directory_path() / "moelab_test_train_nan";
    std::filesystem::remove_all(dir);
    TrainOptions o;
    o.run_dir = dir;
    o.on_step = [](std::int64_t step, model::BlockStack& s) {
        if (step == 3)
            std::get<model::MoELayer>(s.blocks[0]).shared[0].fc2_bias.value(0, 0) = INFINITY;
    };
    EXPECT_THROW(train(initial_moe(c), c, o), TrainingError);
}
