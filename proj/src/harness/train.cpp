// SPDX-License-Identifier: Apache-2.0
#include "moelab/harness/train.hpp"

#include "moelab/convert/convert.hpp"
#include "moelab/errors.hpp"
#include "moelab/model/checkpoint.hpp"
#include "moelab/numkernel/ops.hpp"
#include "moelab/numkernel/random.hpp"
#include "moelab/precision/bf16.hpp"
#include "moelab/telemetry/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace moelab::harness {

namespace {

constexpr const char* kLossHeader = "step,task,lr,mse,aux,total,shared_weight_norm,applied";

void write_step(std::ostream& os, const StepLog& s)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, "%lld,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", static_cast<long long>(s.step),
                  s.task, s.lr, s.mse, s.aux, s.total, s.shared_weight_norm, s.applied ? 1 : 0);
    os << buf;
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j)
{
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os)
        throw FormatError("cannot write " + p.string());
    os << j.dump(2) << '\n';
}

telemetry::ReportOptions report_options(const RunConfig& cfg, std::size_t layers)
{
    telemetry::ReportOptions o;
    o.thresholds = cfg.telemetry.thresholds;
    o.window = cfg.telemetry.window;
    if (layers >= 3)
        o.bands = telemetry::band_preset(cfg.telemetry.bands, layers);
    return o;
}

} // namespace

double shared_weight_norm(const model::BlockStack& stack)
{
    double s = 0.0;
    for (const auto& b : stack.blocks) {
        const auto* m = std::get_if<model::MoELayer>(&b);
        if (!m)
            continue;
        for (const auto& e : m->shared)
            for (const nk::Matrix* w : {&e.fc1_weight.value, &e.fc2_weight.value})
                for (double v : w->values())
                    s += v * v;
    }
    return std::sqrt(s);
}

model::BlockStack initial_dense(const RunConfig& cfg)
{
    auto rng = nk::rng_stream(cfg.train.seed, "dense");
    return model::random_dense_stack(cfg.model.layers, cfg.model.hidden_dim, cfg.model.inner_dim, rng);
}

model::BlockStack initial_moe(const RunConfig& cfg)
{
    return convert::convert_model(initial_dense(cfg), cfg.conversion, cfg.train.seed);
}

std::filesystem::path run_directory(const RunConfig& cfg)
{
    std::filesystem::path base = cfg.telemetry.log_dir;
    if (const char* env = std::getenv(kLogDirEnv); env && *env)
        base = env;
    return base / (config_hash(cfg) + "-s" + std::to_string(cfg.train.seed));
}

TrainResult train(model::BlockStack moe, const RunConfig& cfg, const TrainOptions& opt)
{
    cfg.train.validate();
    if (!moe.is_moe())
        throw PreconditionError("train: expected a converted MoE model");
    moe.validate();

    const TrainConfig& tc = cfg.train;
    const precision::PrecisionPolicy& policy = cfg.precision;
    const std::size_t hidden = moe.hidden_dim;
    const auto& first = std::get<model::MoELayer>(moe.blocks.front());
    const model::BlockStack backbone =
        tc.tasks.teacher == "backbone" ? convert::recover_dense(moe) : model::BlockStack{};
    const auto tasks = make_tasks(tc.seed, hidden, first.gate.config.encoder_width(hidden), tc.tasks, &backbone);

    std::vector<nk::Param*> trainable;
    for (auto& np : model::named_parameters(moe))
        if (np.param->trainable)
            trainable.push_back(np.param);
    if (policy.master_format == nk::NumFormat::bf16)
        for (nk::Param* p : trainable)
            p->value = precision::quantize(p->value, nk::NumFormat::bf16);

    nk::ParamBinder::Quantizer quantizer;
    if (policy.compute_format != nk::NumFormat::wide64)
        quantizer = [&policy](const nk::Matrix& m) { return policy.compute_copy(m); };

    TrainResult res;
    res.run_dir = opt.run_dir ? *opt.run_dir : run_directory(cfg);
    std::ofstream losses;
    if (opt.write_files) {
        std::filesystem::create_directories(res.run_dir);
        write_json(res.run_dir / "config.json", to_json(cfg));
        losses.open(res.run_dir / "losses.csv", std::ios::binary | std::ios::trunc);
        if (!losses)
            throw FormatError("cannot write " + (res.run_dir / "losses.csv").string());
        losses << kLossHeader << '\n';
    }

    telemetry::Recorder recorder(cfg.telemetry.log_interval);
    routing::RoutingLogBook book;
    OptimizerState state;

    std::int64_t steps = tc.total_steps;
    if (opt.max_steps)
        steps = std::min(steps, *opt.max_steps);

    const std::size_t n = tc.batch_tokens;
    const routing::BatchShape shape = tc.seq_len ? routing::BatchShape{n / tc.seq_len, tc.seq_len}
                                                 : routing::BatchShape{1, n};

    for (std::int64_t step = 1; step <= steps; ++step) {
        StepLog log;
        log.step = step;
        log.task = task_for_step(tc.seed, static_cast<std::uint64_t>(step), tasks.size()) + 1;
        const TaskBatch batch = gen_task_batch(tasks[log.task - 1], n, tc.seed, static_cast<std::uint64_t>(step));

        nk::Tape t;
        nk::ParamBinder binder(t, quantizer);
        model::MoeOptions mo;
        mo.training = true;
        mo.batch = shape;
        mo.dispatch = tc.dispatch;
        mo.log = &book;
        mo.step = step;
        const auto f = model::stack_forward(binder, moe, t.constant(batch.tokens), t.constant(batch.instruction), mo);
        const nk::Var mse = nk::mse(t, f.output, t.constant(batch.targets));
        nk::Var total = mse;
        for (const nk::Var a : f.aux_losses) {
            log.aux += t.value(a)(0, 0);
            total = nk::add(t, total, a);
        }
        log.mse = t.value(mse)(0, 0);
        log.total = t.value(total)(0, 0);

        if (!std::isfinite(log.total)) {
            std::string where = "in memory";
            if (opt.write_files) {
                const auto dump = res.run_dir / "nan_dump.json";
                model::save_checkpoint(dump, moe, {tc.seed, policy, {{"step", step}, {"reason", "non-finite loss"}}});
                where = dump.string();
            }
            throw TrainingError("non-finite loss at step " + std::to_string(step) + "; state dumped to " + where);
        }

        t.backward(total);
        std::vector<nk::Matrix> grads;
        grads.reserve(trainable.size());
        for (nk::Param* p : trainable) {
            nk::Matrix g = binder.grad(*p);
            grads.push_back(g.empty() && !p->value.empty() ? nk::Matrix::zeros_like(p->value) : std::move(g));
        }
        log.lr = lr_schedule(step, tc);
        const StepOutcome out = adamw_step(trainable, grads, state, tc, log.lr, policy);
        log.applied = out.applied;
        log.shared_weight_norm = shared_weight_norm(moe);

        if (recorder.due(step))
            recorder.flush(book, step, res.series);
        if (opt.write_files)
            write_step(losses, log);
        res.steps.push_back(log);
        if (opt.on_step)
            opt.on_step(step, moe);
    }
    // Trailing partial interval.
    bool pending = false;
    for (const auto& [_, l] : book.layers())
        pending = pending || l.tokens > 0;
    if (pending)
        recorder.flush(book, steps, res.series);

    const auto probes = gen_task_batch(tasks.front(), std::max<std::size_t>(cfg.telemetry.probe_tokens, 1), tc.seed, 0);
    res.report = telemetry::build_report(res.series, report_options(cfg, moe.layers()),
                                         telemetry::homogenization_report(moe, probes.tokens));
    if (opt.write_files) {
        losses.close();
        telemetry::write_csv(res.run_dir / "utilization.csv", res.series);
        write_json(res.run_dir / "report.json", res.report);
        if (cfg.telemetry.write_checkpoint)
            model::save_checkpoint(res.run_dir / "checkpoint.json", moe, {tc.seed, policy, {{"steps", steps}}});
    }
    res.model = std::move(moe);
    return res;
}

} // namespace moelab::harness
