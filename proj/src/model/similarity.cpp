// SPDX-License-Identifier: Apache-2.0
#include "moelab/model/similarity.hpp"

#include "moelab/errors.hpp"

#include <cmath>

namespace moelab::model {

bool cosine(std::span<const double> a, std::span<const double> b, double& out)
{
    if (a.size() != b.size())
        throw ShapeError("cosine: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        return false;
    out = dot / std::sqrt(na * nb);
    return true;
}

std::vector<PairSimilarity> expert_output_similarity(const MoELayer& layer, const nk::Matrix& probes)
{
    if (layer.routed.size() < 2)
        throw ArgumentError("similarity needs at least two routed experts");
    if (probes.rows() == 0)
        throw ArgumentError("similarity needs at least one probe token");

    std::vector<nk::Matrix> outs;
    outs.reserve(layer.routed.size());
    for (const auto& e : layer.routed)
        outs.push_back(ffn_forward(e, probes));

    std::vector<PairSimilarity> pairs;
    for (std::size_t a = 0; a < outs.size(); ++a)
        for (std::size_t b = a + 1; b < outs.size(); ++b) {
            PairSimilarity p{a, b};
            double total = 0.0;
            for (std::size_t i = 0; i < probes.rows(); ++i) {
                double c = 0.0;
                if (cosine(outs[a].row(i), outs[b].row(i), c)) {
                    total += c;
                    ++p.tokens_used;
                } else {
                    ++p.tokens_skipped;
                }
            }
            p.flagged = p.tokens_skipped > 0;
            p.mean_cosine = p.tokens_used ? total / double(p.tokens_used) : 0.0;
            pairs.push_back(p);
        }
    return pairs;
}

} // namespace moelab::model
