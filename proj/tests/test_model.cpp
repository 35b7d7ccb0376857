// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include "moelab/convert/convert.hpp"
#include "moelab/errors.hpp"
#include "moelab/model/block_stack.hpp"
#include "moelab/model/checkpoint.hpp"
#include "moelab/model/similarity.hpp"
#include "moelab/numkernel/random.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace moelab;
using namespace moelab::model;
using nk::Matrix;

namespace {

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<double> vals(const Matrix& m)
{
    return {m.values().begin(), m.values().end()};
}

std::filesystem::path scratch_dir(const std::string& name)
{
    const auto d = std::filesystem::temp_directory_path() / ("moelab_test_model_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

MoELayer random_layer(std::uint64_t seed, std::size_t d, std::size_t inner, std::size_t routed, std::size_t k)
{
    auto rng = nk::rng_stream(seed, "layer");
    MoELayer m;
    for (std::size_t e = 0; e < routed; ++e) {
        ExpertFFN x;
        static_cast<FfnParams&>(x) = random_dense_ffn(d, inner, rng);
        x.set_group(nk::ParamGroup::routed);
        m.routed.push_back(x);
    }
    ExpertFFN s;
    static_cast<FfnParams&>(s) = random_dense_ffn(d, inner, rng);
    s.role = ExpertRole::shared;
    s.set_group(nk::ParamGroup::shared);
    m.shared.push_back(s);
    routing::GateConfig gc;
    gc.kind = routing::GateKind::linear;
    gc.n_routed_experts = routed;
    gc.top_k = k;
    gc.gate_init_std = 1.0;
    m.gate = routing::init_gate(gc, d, rng);
    return m;
}

BlockStack small_moe(std::uint64_t seed)
{
    auto rng = nk::rng_stream(seed, "dense");
    const BlockStack dense = random_dense_stack(3, 6, 10, rng);
    convert::ConversionConfig c;
    c.n_routed = 3;
    c.gate.n_routed_experts = 3;
    c.gate.top_k = 2;
    c.gate.kind = routing::GateKind::mlp;
    c.gate.mlp_hidden_dim = 5;
    c.shared_init = convert::SharedInit::train_micro_noise;
    return convert::convert_model(dense, c, seed);
}

} // namespace

TEST(Ffn, MatchesNaiveComposition)
{
    auto rng = nk::rng_stream(1, "ffn");
    const DenseFFN f = random_dense_ffn(5, 7, rng);
    std::mt19937_64 xr(2);
    const Matrix x = oracle::random_matrix(4, 5, xr);
    Matrix h = oracle::naive_matmul(x, oracle::naive_transpose(f.fc1_weight.value));
    for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < h.cols(); ++j)
            h(i, j) = oracle::gelu_ref(h(i, j) + f.fc1_bias.value(0, j));
    Matrix y = oracle::naive_matmul(h, oracle::naive_transpose(f.fc2_weight.value));
    const Matrix got = ffn_forward(f, x);
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j)
            EXPECT_NEAR(got(i, j), y(i, j) + f.fc2_bias.value(0, j), 1e-13);

    nk::Tape t;
    nk::ParamBinder b(t);
    EXPECT_EQ(vals(t.value(ffn_forward(b, f, t.constant(x)))), vals(got));
    EXPECT_THROW(ffn_forward(f, Matrix(2, 4)), ShapeError);
    EXPECT_EQ(f.parameter_count(), 7u * 5 + 7 + 5 * 7 + 5);
}

TEST(Ffn, StructuresDiffer)
{
    const FfnStructure a = gelu_mlp_structure(4, 8);
    const FfnStructure b = gated_three_projection_structure(4, 8);
    EXPECT_EQ(a.projections.size(), 2u);
    EXPECT_EQ(b.projections.size(), 3u);
    EXPECT_NE(a.activation, b.activation);
    auto rng = nk::rng_stream(1, "ffn");
    EXPECT_EQ(random_dense_ffn(4, 8, rng).structure().projections, a.projections);
}

TEST(MoeLayer, SparseAndDenseMaskDispatchAgreeBitwise)
{
    for (std::size_t k : {1u, 2u, 3u}) {
        const MoELayer m = random_layer(k, 6, 9, 3, k);
        std::mt19937_64 rng(10 + k);
        const Matrix x = oracle::random_matrix(12, 6, rng);
        MoeOptions dense{.training = false};
        MoeOptions sparse{.training = false};
        sparse.dispatch = DispatchMode::sparse;
        const auto a = moe_infer(m, x, nullptr, dense);
        const auto b = moe_infer(m, x, nullptr, sparse);
        EXPECT_EQ(vals(a.output), vals(b.output)) << k;
        EXPECT_EQ(a.decision.topk_idx, b.decision.topk_idx);
    }
}

TEST(MoeLayer, OutputIsSharedPlusWeightedRouted)
{
    const MoELayer m = random_layer(4, 5, 6, 3, 2);
    std::mt19937_64 rng(3);
    const Matrix x = oracle::random_matrix(7, 5, rng);
    const auto r = moe_infer(m, x);
    const Matrix s = ffn_forward(m.shared[0], x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        Matrix xi(1, 5);
        std::copy(x.row(i).begin(), x.row(i).end(), xi.row(0).begin());
        for (std::size_t j = 0; j < 5; ++j) {
            double want = s(i, j);
            for (std::size_t slot = 0; slot < 2; ++slot) {
                const std::size_t e = r.decision.indices(i)[slot];
                want += r.decision.weights(i)[slot] * ffn_forward(m.routed[e], xi)(0, j);
            }
            EXPECT_NEAR(r.output(i, j), want, 1e-13);
        }
    }
}

TEST(MoeLayer, IdenticalExpertsWithUnitWeightsReturnTheCommonOutputExactly)
{
    auto rng = nk::rng_stream(8, "dense");
    const DenseFFN d = random_dense_ffn(6, 8, rng);
    MoELayer m;
    m.routed = convert::clone_routed(d, 3);
    routing::GateConfig gc;
    gc.n_routed_experts = 3;
    gc.top_k = 3;
    gc.gate_init_std = 0.7;
    m.gate = routing::init_gate(gc, 6, rng);
    std::mt19937_64 xr(4);
    const Matrix x = oracle::random_matrix(9, 6, xr);
    EXPECT_EQ(vals(moe_infer(m, x).output), vals(ffn_forward(d, x)));
}

TEST(MoeLayer, ValidationErrors)
{
    MoELayer m = random_layer(1, 4, 4, 2, 1);
    m.routed.pop_back();
    EXPECT_THROW(m.validate(), ConfigError);
    EXPECT_THROW(parse_dispatch_mode("scatter"), ConfigError);
}

TEST(BlockStack, MixedKindsAndWidthsRejected)
{
    BlockStack s = small_moe(1);
    auto rng = nk::rng_stream(2, "d");
    s.blocks.emplace_back(random_dense_ffn(6, 4, rng));
    EXPECT_THROW(s.validate(), ConfigError);
    BlockStack w;
    w.hidden_dim = 6;
    w.blocks.emplace_back(random_dense_ffn(5, 4, rng));
    EXPECT_THROW(w.validate(), ConfigError);
}

TEST(BlockStack, NamedParameterPaths)
{
    const BlockStack s = small_moe(2);
    const auto params = named_parameters(s);
    ASSERT_FALSE(params.empty());
    EXPECT_EQ(params.front().path.rfind("blocks.1.", 0), 0u);
    std::size_t total = 0;
    for (const auto& p : params)
        total += p.param->value.size();
    EXPECT_EQ(total, s.parameter_count());
    bool saw_gate = false;
    for (const auto& p : params)
        saw_gate = saw_gate || p.path.find(".gate.") != std::string::npos;
    EXPECT_TRUE(saw_gate);
}

TEST(BlockStack, TapeAndPlainInferenceAgree)
{
    const BlockStack s = small_moe(3);
    std::mt19937_64 rng(5);
    const Matrix x = oracle::random_matrix(8, 6, rng);
    nk::Tape t;
    nk::ParamBinder b(t);
    const auto f = stack_forward(b, s, t.constant(x), std::nullopt, {.training = false});
    EXPECT_EQ(vals(t.value(f.output)), vals(stack_infer(s, x)));
    EXPECT_EQ(f.decisions.size(), 3u);
}

TEST(Checkpoint, RoundTripIsByteIdentical)
{
    const auto dir = scratch_dir("roundtrip");
    const BlockStack s = small_moe(4);
    CheckpointMeta meta;
    meta.seed = 4;
    meta.extra = {{"note", "x"}};
    save_checkpoint(dir / "a.json", s, meta);
    const Checkpoint c = load_checkpoint(dir / "a.json");
    save_checkpoint(dir / "b.json", c.stack, c.meta);
    EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
    auto ja = nlohmann::json::parse(slurp(dir / "a.json"));
    auto jb = nlohmann::json::parse(slurp(dir / "b.json"));
    EXPECT_EQ(ja["data_file"], "a.bin");
    ja.erase("data_file");
    jb.erase("data_file");
    EXPECT_EQ(ja, jb);
    EXPECT_EQ(c.meta.seed, 4u);
    EXPECT_EQ(c.stack.parameter_count(), s.parameter_count());

    // Loaded values are the float32 roundings of the originals.
    const auto orig = named_parameters(s);
    const auto back = named_parameters(c.stack);
    ASSERT_EQ(orig.size(), back.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
        EXPECT_EQ(orig[i].path, back[i].path);
        EXPECT_EQ(orig[i].param->trainable, back[i].param->trainable) << orig[i].path;
        for (std::size_t j = 0; j < orig[i].param->value.size(); ++j)
            ASSERT_EQ(back[i].param->value.values()[j],
                      static_cast<double>(static_cast<float>(orig[i].param->value.values()[j])));
    }
}

TEST(Checkpoint, CorruptFilesAreRejected)
{
    const auto dir = scratch_dir("corrupt");
    save_checkpoint(dir / "c.json", small_moe(5), {});
    const std::string bin = slurp(dir / "c.bin");
    {
        std::ofstream f(dir / "c.bin", std::ios::binary | std::ios::trunc);
        f.write(bin.data(), static_cast<std::streamsize>(bin.size() - 4));
    }
    EXPECT_THROW(load_checkpoint(dir / "c.json"), FormatError);
    {
        std::ofstream f(dir / "c.json", std::ios::trunc);
        f << "{not json";
    }
    EXPECT_THROW(load_checkpoint(dir / "c.json"), FormatError);
    EXPECT_THROW(load_checkpoint(dir / "missing.json"), FormatError);
}

TEST(Similarity, CosineBasics)
{
    double c = -2.0;
    const std::vector<double> a{1, 2, 3}, b{-1, -2, -3}, z{0, 0, 0};
    EXPECT_TRUE(cosine(a, a, c));
    EXPECT_EQ(c, 1.0);
    EXPECT_TRUE(cosine(a, b, c));
    EXPECT_EQ(c, -1.0);
    c = 5.0;
    EXPECT_FALSE(cosine(a, z, c));
    EXPECT_EQ(c, 5.0);
}

TEST(Similarity, ClonedExpertsAreExactlyParallel)
{
    const BlockStack s = small_moe(6);
    std::mt19937_64 rng(7);
    const Matrix probes = oracle::random_matrix(16, 6, rng);
    for (const auto& b : s.blocks) {
        const auto sims = expert_output_similarity(std::get<MoELayer>(b), probes);
        EXPECT_EQ(sims.size(), 3u);
        for (const auto& p : sims) {
            EXPECT_EQ(p.mean_cosine, 1.0);
            EXPECT_EQ(p.tokens_used, 16u);
            EXPECT_FALSE(p.flagged);
        }
    }
    MoELayer one = random_layer(1, 6, 4, 2, 1);
    one.routed.pop_back();
    EXPECT_THROW(expert_output_similarity(one, probes), ArgumentError);
    EXPECT_THROW(expert_output_similarity(std::get<MoELayer>(s.blocks[0]), Matrix(0, 6)), ArgumentError);
}

TEST(Similarity, ZeroOutputTokensAreSkippedAndFlagged)
{
    MoELayer m = random_layer(2, 4, 3, 2, 1);
    for (auto* p : m.routed[1].params())
        p->value.fill(0.0);
    std::mt19937_64 rng(1);
    const auto sims = expert_output_similarity(m, oracle::random_matrix(5, 4, rng));
    ASSERT_EQ(sims.size(), 1u);
    EXPECT_TRUE(sims[0].flagged);
    EXPECT_EQ(sims[0].tokens_skipped, 5u);
}
