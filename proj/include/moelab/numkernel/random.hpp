// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "moelab/numkernel/matrix.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace moelab::nk {

/// Independent generator for one purpose ("init", "data", ...) and index,
/// derived from a base seed, so streams never share draws.
std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0);

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng, double mean = 0.0);

} // namespace moelab::nk
