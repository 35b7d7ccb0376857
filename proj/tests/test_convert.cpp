// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include "moelab/convert/convert.hpp"
#include "moelab/errors.hpp"
#include "moelab/numkernel/random.hpp"

#include <gtest/gtest.h>

using namespace moelab;
using namespace moelab::convert;
using model::BlockStack;
using nk::Matrix;

namespace {

BlockStack dense_stack(std::uint64_t seed, std::size_t layers = 4, std::size_t d = 8, std::size_t inner = 16)
{
    auto rng = nk::rng_stream(seed, "dense");
    return model::random_dense_stack(layers, d, inner, rng);
}

ConversionConfig all_route_config(routing::GateKind kind, std::size_t n_routed)
{
    ConversionConfig c;
    c.n_routed = n_routed;
    c.gate.kind = kind;
    c.gate.n_routed_experts = n_routed;
    c.gate.top_k = n_routed;
    c.gate.gate_init_std = 0.5;
    c.gate.mlp_hidden_dim = 12;
    return c;
}

std::vector<Matrix> probes(std::uint64_t seed, std::size_t n, std::size_t tokens, std::size_t d)
{
    std::mt19937_64 rng(seed);
    std::vector<Matrix> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(oracle::random_matrix(tokens, d, rng, 3.0));
    return out;
}

} // namespace

class EquivalenceByGate : public ::testing::TestWithParam<routing::GateKind> {};

TEST_P(EquivalenceByGate, AllRouteConversionIsExact)
{
    for (std::size_t n : {2u, 3u, 5u}) {
        const BlockStack dense = dense_stack(n);
        const BlockStack moe = convert_model(dense, all_route_config(GetParam(), n), 11);
        std::mt19937_64 er(1);
        const Matrix enc = oracle::random_matrix(3, 8, er);
        const auto p = probes(n, 16, 8, 8);
        const EquivalenceReport r = verify_equivalence(dense, moe, p, &enc);
        EXPECT_EQ(r.max_abs_dev, 0.0) << n;
        EXPECT_EQ(r.verdict, "equivalent");
        EXPECT_EQ(r.probes, 16u);
    }
}

INSTANTIATE_TEST_SUITE_P(Kinds, EquivalenceByGate,
                         ::testing::Values(routing::GateKind::linear, routing::GateKind::mlp,
                                           routing::GateKind::cross_attention));

TEST(Equivalence, NonzeroSharedExpertBreaksIt)
{
    const BlockStack dense = dense_stack(2);
    ConversionConfig c = all_route_config(routing::GateKind::linear, 2);
    c.shared_init = SharedInit::train_micro_noise;
    c.sigma = 1e-6;
    const auto near = verify_equivalence(dense, convert_model(dense, c, 3), probes(1, 4, 8, 8));
    EXPECT_GT(near.max_abs_dev, 0.0);
    EXPECT_EQ(near.verdict, "near_equivalent");
    c.shared_init = SharedInit::clone_dense;
    const auto far = verify_equivalence(dense, convert_model(dense, c, 3), probes(1, 4, 8, 8));
    EXPECT_EQ(far.verdict, "not_equivalent");
}

TEST(Equivalence, PartialRoutingIsRefused)
{
    const BlockStack dense = dense_stack(3);
    ConversionConfig c = all_route_config(routing::GateKind::linear, 3);
    c.gate.top_k = 2;
    const BlockStack moe = convert_model(dense, c, 1);
    EXPECT_THROW(verify_equivalence(dense, moe, probes(1, 2, 4, 8)), PreconditionError);
    EXPECT_THROW(verify_equivalence(dense, dense, probes(1, 2, 4, 8)), PreconditionError);
}

TEST(Equivalence, Bf16ComputeCopiesStillAgree)
{
    const BlockStack dense = dense_stack(4);
    const BlockStack moe = convert_model(dense, all_route_config(routing::GateKind::mlp, 2), 2);
    precision::PrecisionPolicy pol;
    const auto r = verify_equivalence(dense, moe, probes(2, 4, 8, 8), nullptr, &pol);
    EXPECT_EQ(r.max_abs_dev, 0.0);
}

TEST(Conversion, RoutedAreFrozenCopiesAndSharedStartsAtZero)
{
    const BlockStack dense = dense_stack(5, 2);
    const BlockStack moe = convert_model(dense, all_route_config(routing::GateKind::linear, 3), 1);
    ASSERT_TRUE(moe.is_moe());
    for (std::size_t l = 0; l < 2; ++l) {
        const auto& d = std::get<model::DenseFFN>(dense.blocks[l]);
        const auto& m = std::get<model::MoELayer>(moe.blocks[l]);
        EXPECT_EQ(m.layer_index, l + 1);
        ASSERT_EQ(m.routed.size(), 3u);
        for (const auto& e : m.routed) {
            EXPECT_FALSE(e.trainable());
            for (std::size_t k = 0; k < 4; ++k) {
                const auto a = e.params()[k]->value.values();
                const auto b = d.params()[k]->value.values();
                EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
            }
        }
        ASSERT_EQ(m.shared.size(), 1u);
        EXPECT_TRUE(m.shared[0].trainable());
        EXPECT_EQ(m.shared[0].role, model::ExpertRole::shared);
        for (const auto* p : m.shared[0].params())
            for (double v : p->value.values())
                EXPECT_EQ(v, 0.0);
        for (const auto& p : m.gate.params)
            EXPECT_TRUE(p.trainable);
    }
    const BlockStack recovered = recover_dense(moe);
    EXPECT_EQ(recovered.parameter_count(), dense.parameter_count());
    EXPECT_THROW(recover_dense(dense), PreconditionError);
    EXPECT_THROW(convert_model(moe, all_route_config(routing::GateKind::linear, 3), 1), PreconditionError);
}

TEST(Conversion, DeterministicInSeed)
{
    const BlockStack dense = dense_stack(6, 2);
    ConversionConfig c = all_route_config(routing::GateKind::mlp, 2);
    c.shared_init = SharedInit::train_micro_noise;
    const BlockStack ma = convert_model(dense, c, 9), mb = convert_model(dense, c, 9), mo = convert_model(dense, c, 10);
    const auto a = model::named_parameters(ma);
    const auto b = model::named_parameters(mb);
    const auto other = model::named_parameters(mo);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto x = a[i].param->value.values();
        const auto y = b[i].param->value.values();
        const auto z = other[i].param->value.values();
        EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end())) << a[i].path;
        any_diff = any_diff || !std::equal(x.begin(), x.end(), z.begin(), z.end());
    }
    EXPECT_TRUE(any_diff);
}

TEST(Conversion, FreezeAllMakesEverythingTrainable)
{
    ConversionConfig c = all_route_config(routing::GateKind::linear, 2);
    c.freeze = FreezePolicy::all;
    const BlockStack moe = convert_model(dense_stack(7, 1), c, 1);
    for (const auto& np : model::named_parameters(moe))
        EXPECT_TRUE(np.param->trainable) << np.path;
}

TEST(Conversion, MicroNoiseSharedHasRequestedScale)
{
    std::mt19937_64 rng(3);
    const auto s = init_shared(64, 128, SharedInit::train_micro_noise, 1e-3, rng);
    double sq = 0.0;
    for (double v : s.fc1_weight.value.values())
        sq += v * v;
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(s.fc1_weight.value.size())), 1e-3, 5e-5);
    for (double v : s.fc2_bias.value.values())
        EXPECT_EQ(v, 0.0);
    EXPECT_THROW(init_shared(4, 4, SharedInit::clone_dense, 0.0, rng), ArgumentError);
}

TEST(StructureCheck, ReportsEveryMismatch)
{
    const auto v = check_structure(model::gelu_mlp_structure(8, 16), model::gated_three_projection_structure(8, 16));
    EXPECT_FALSE(v.ok);
    ASSERT_GE(v.mismatches.size(), 2u);
    bool activation = false, count = false;
    for (const auto& m : v.mismatches) {
        activation = activation || m.find("activation") != std::string::npos;
        count = count || m.find("projection") != std::string::npos;
    }
    EXPECT_TRUE(activation);
    EXPECT_TRUE(count);
    EXPECT_TRUE(check_structure(model::gelu_mlp_structure(8, 16), model::gelu_mlp_structure(8, 16)).ok);
    const auto w = check_structure(model::gelu_mlp_structure(8, 16), model::gelu_mlp_structure(8, 12));
    EXPECT_FALSE(w.ok);
}

TEST(StructureCheck, CloneRoutedArguments)
{
    auto rng = nk::rng_stream(1, "d");
    const auto d = model::random_dense_ffn(4, 6, rng);
    EXPECT_THROW(clone_routed(d, 0), ArgumentError);
    EXPECT_EQ(clone_routed(d, 4).size(), 4u);
}

TEST(ConversionConfig, JsonRoundTripAndValidation)
{
    ConversionConfig c = all_route_config(routing::GateKind::mlp, 3);
    c.shared_init = SharedInit::clone_dense;
    c.freeze = FreezePolicy::all;
    c.sigma = 0.25;
    const ConversionConfig back = conversion_config_from_json(to_json(c), c.gate);
    EXPECT_EQ(back.n_routed, 3u);
    EXPECT_EQ(back.shared_init, SharedInit::clone_dense);
    EXPECT_EQ(back.freeze, FreezePolicy::all);
    EXPECT_EQ(back.sigma, 0.25);

    ConversionConfig bad = c;
    bad.gate.n_routed_experts = 2;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = c;
    bad.shared_init = SharedInit::train_micro_noise;
    bad.sigma = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    EXPECT_THROW(parse_shared_init("ones"), ConfigError);
    EXPECT_THROW(parse_freeze_policy("none"), ConfigError);
    EXPECT_EQ(parse_shared_init(to_string(SharedInit::train_micro_noise)), SharedInit::train_micro_noise);
}

TEST(EquivalenceReport, Json)
{
    EquivalenceReport r;
    r.max_abs_dev = 0.0;
    r.verdict = "equivalent";
    const auto j = to_json(r);
    EXPECT_EQ(j["max_abs_dev"], 0.0);
    EXPECT_EQ(j["verdict"], "equivalent");
}
