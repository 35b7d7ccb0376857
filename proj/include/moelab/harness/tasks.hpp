// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/harness/config.hpp"
#include "moelab/model/block_stack.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace moelab::harness {

/// A synthetic task: tokens from a Gaussian mixture, targets from a frozen
/// random teacher stack, and a fixed instruction sequence for the
/// cross-attention gate.
struct TaskSpec {
    std::size_t task_id = 1;
    nk::Matrix means;     // components x hidden
    double noise_std = 0.5;
    nk::Matrix instruction; // instruction_tokens x encoder width
    model::BlockStack teacher;
};

/// Fully determined by (task_id, seed) and, for the "backbone" teacher, the
/// dense backbone. task_id is 1-based. PreconditionError when a backbone
/// teacher is requested without a dense backbone of the right width.
TaskSpec make_task(std::size_t task_id, std::uint64_t seed, std::size_t hidden_dim, std::size_t encoder_dim,
                   const TaskConfig& cfg, const model::BlockStack* backbone = nullptr);

std::vector<TaskSpec> make_tasks(std::uint64_t seed, std::size_t hidden_dim, std::size_t encoder_dim,
                                 const TaskConfig& cfg, const model::BlockStack* backbone = nullptr);

/// gain * block + delta_scale * delta as one FFN whose inner width is the sum
/// of both inner widths.
model::DenseFFN fuse_teacher_block(const model::FfnParams& block, double gain, const model::FfnParams* delta,
                                   double delta_scale);

struct TaskBatch {
    nk::Matrix tokens;
    nk::Matrix targets;
    nk::Matrix instruction;
};

/// n_tokens samples: a uniform component per token plus isotropic noise;
/// targets are the teacher applied token-wise. Deterministic in (seed, step).
/// ArgumentError when n_tokens is 0.
TaskBatch gen_task_batch(const TaskSpec& task, std::size_t n_tokens, std::uint64_t seed, std::uint64_t step);

/// Task used at a step: seeded uniform choice, 0-based index.
std::size_t task_for_step(std::uint64_t seed, std::uint64_t step, std::size_t n_tasks);

} // namespace moelab::harness
