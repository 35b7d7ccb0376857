// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/model/block_stack.hpp"
#include "moelab/precision/policy.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>

namespace moelab::model {

struct CheckpointMeta {
    std::uint64_t seed = 0;
    precision::PrecisionPolicy policy;
    nlohmann::json extra = nlohmann::json::object();
};

struct Checkpoint {
    BlockStack stack;
    CheckpointMeta meta;
};

/// Writes `manifest` (JSON) and a sibling `.bin` holding every tensor as
/// little-endian float32, in named_parameters() order. Values are rounded to
/// float32 on write; loading and saving again reproduces both files byte for
/// byte.
void save_checkpoint(const std::filesystem::path& manifest, const BlockStack& stack, const CheckpointMeta& meta);

/// Throws FormatError on an unreadable, inconsistent or truncated checkpoint.
Checkpoint load_checkpoint(const std::filesystem::path& manifest);

/// Manifest JSON without writing anything.
nlohmann::json checkpoint_manifest(const BlockStack& stack, const CheckpointMeta& meta, const std::string& data_file);

} // namespace moelab::model
