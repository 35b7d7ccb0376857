// SPDX-License-Identifier: Apache-2.0
#include "moelab/harness/tasks.hpp"

#include "moelab/errors.hpp"
#include "moelab/numkernel/random.hpp"

#include <algorithm>
#include <cmath>

namespace moelab::harness {

namespace {

nk::Matrix stack_rows(const nk::Matrix& a, const nk::Matrix& b)
{
    nk::Matrix out(a.rows() + b.rows(), a.cols());
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

nk::Matrix stack_cols(const nk::Matrix& a, const nk::Matrix& b)
{
    nk::Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::copy(a.row(i).begin(), a.row(i).end(), out.row(i).begin());
        std::copy(b.row(i).begin(), b.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

nk::Matrix scaled(nk::Matrix m, double s)
{
    for (double& v : m.values())
        v *= s;
    return m;
}

} // namespace

model::DenseFFN fuse_teacher_block(const model::FfnParams& block, double gain, const model::FfnParams* delta,
                                   double delta_scale)
{
    model::DenseFFN f;
    static_cast<model::FfnParams&>(f) = block;
    f.fc2_weight.value = scaled(block.fc2_weight.value, gain);
    f.fc2_bias.value = scaled(block.fc2_bias.value, gain);
    if (delta) {
        if (delta->hidden_dim() != block.hidden_dim())
            throw ShapeError("teacher delta width does not match the backbone block");
        f.fc1_weight.value = stack_rows(block.fc1_weight.value, delta->fc1_weight.value);
        f.fc1_bias.value = stack_cols(block.fc1_bias.value, delta->fc1_bias.value);
        f.fc2_weight.value = stack_cols(f.fc2_weight.value, scaled(delta->fc2_weight.value, delta_scale));
        const nk::Matrix db = scaled(delta->fc2_bias.value, delta_scale);
        for (std::size_t j = 0; j < db.cols(); ++j)
            f.fc2_bias.value(0, j) += db(0, j);
    }
    f.set_trainable(false);
    f.set_group(nk::ParamGroup::dense);
    return f;
}

TaskSpec make_task(std::size_t task_id, std::uint64_t seed, std::size_t hidden_dim, std::size_t encoder_dim,
                   const TaskConfig& cfg, const model::BlockStack* backbone)
{
    if (task_id < 1)
        throw ArgumentError("task ids start at 1");
    TaskSpec t;
    t.task_id = task_id;
    t.noise_std = cfg.noise_std;
    auto mrng = nk::rng_stream(seed, "task.means", task_id);
    t.means = nk::normal_matrix(cfg.components, hidden_dim, cfg.mean_scale, mrng);
    auto irng = nk::rng_stream(seed, "task.instruction", task_id);
    t.instruction = nk::normal_matrix(cfg.instruction_tokens, encoder_dim, 1.0, irng);
    auto trng = nk::rng_stream(seed, "task.teacher", task_id);
    if (cfg.teacher == "random") {
        t.teacher = model::random_dense_stack(cfg.teacher_layers, hidden_dim, cfg.teacher_inner_dim, trng);
        return t;
    }
    if (!backbone || backbone->is_moe() || backbone->hidden_dim != hidden_dim)
        throw PreconditionError("backbone teacher needs the dense backbone of width " + std::to_string(hidden_dim));
    std::normal_distribution<double> log_gain(0.0, cfg.gain_spread);
    t.teacher.hidden_dim = hidden_dim;
    for (const auto& b : backbone->blocks) {
        const auto& base = std::get<model::DenseFFN>(b);
        const double gain = std::exp(log_gain(trng));
        if (cfg.teacher_inner_dim == 0 || cfg.delta_scale == 0.0) {
            t.teacher.blocks.emplace_back(fuse_teacher_block(base, gain, nullptr, 0.0));
            continue;
        }
        const model::DenseFFN delta = model::random_dense_ffn(hidden_dim, cfg.teacher_inner_dim, trng);
        t.teacher.blocks.emplace_back(fuse_teacher_block(base, gain, &delta, cfg.delta_scale));
    }
    return t;
}

std::vector<TaskSpec> make_tasks(std::uint64_t seed, std::size_t hidden_dim, std::size_t encoder_dim,
                                 const TaskConfig& cfg, const model::BlockStack* backbone)
{
    std::vector<TaskSpec> out;
    for (std::size_t i = 1; i <= cfg.count; ++i)
        out.push_back(make_task(i, seed, hidden_dim, encoder_dim, cfg, backbone));
    return out;
}

TaskBatch gen_task_batch(const TaskSpec& task, std::size_t n_tokens, std::uint64_t seed, std::uint64_t step)
{
    if (n_tokens == 0)
        throw ArgumentError("gen_task_batch: n_tokens must be positive");
    auto rng = nk::rng_stream(seed, "data", step * 1000003ull + task.task_id);
    std::uniform_int_distribution<std::size_t> pick(0, task.means.rows() - 1);
    std::normal_distribution<double> noise(0.0, task.noise_std);
    const std::size_t d = task.means.cols();
    TaskBatch b;
    b.tokens = nk::Matrix(n_tokens, d);
    for (std::size_t i = 0; i < n_tokens; ++i) {
        const std::size_t c = pick(rng);
        for (std::size_t j = 0; j < d; ++j)
            b.tokens(i, j) = task.means(c, j) + (task.noise_std > 0.0 ? noise(rng) : 0.0);
    }
    b.targets = model::stack_infer(task.teacher, b.tokens);
    b.instruction = task.instruction;
    return b;
}

std::size_t task_for_step(std::uint64_t seed, std::uint64_t step, std::size_t n_tasks)
{
    auto rng = nk::rng_stream(seed, "task.order", step);
    return std::uniform_int_distribution<std::size_t>(0, n_tasks - 1)(rng);
}

} // namespace moelab::harness
