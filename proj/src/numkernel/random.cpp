// SPDX-License-Identifier: Apache-2.0
#include "moelab/numkernel/random.hpp"

#include <vector>

namespace moelab::nk {

std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view purpose, std::uint64_t index)
{
    std::vector<std::uint32_t> material{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                        static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    for (char c : purpose)
        material.push_back(static_cast<unsigned char>(c));
    std::seed_seq seq(material.begin(), material.end());
    return std::mt19937_64(seq);
}

Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng, double mean)
{
    Matrix m(rows, cols, mean);
    if (stddev == 0.0)
        return m;
    std::normal_distribution<double> dist(mean, stddev);
    for (double& v : m.values())
        v = dist(rng);
    return m;
}

} // namespace moelab::nk
