#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace condiff;
using namespace condiff::conditioning;
using testutil::randn;

namespace {

BlockConfig small_block(IntegrationMode mode) {
    BlockConfig c;
    c.channels = 8;
    c.bases = 4;
    c.integration = mode;
    c.scalar_dim = 6;
    return c;
}

nn::ParamStore<float> block_params(const BlockConfig& c, std::uint64_t seed) {
    nn::ParamSpecs specs;
    add_block_specs(specs, "b", c);
    return nn::init_params<float>(specs, seed);
}

nn::ParamStore<float> zero_params(const nn::ParamStore<float>& p) {
    nn::ParamStore<float> z;
    for (const auto& e : p.entries()) z.add(e.name, Tensor<float>::zeros(e.tensor.shape()));
    return z;
}

} // namespace

TEST(GuidanceFeatures, ZeroGuidanceZeroBias) {
    auto c = small_block(IntegrationMode::akgm);
    auto p = block_params(c, 1); // biases init to zero
    auto G = compute_guidance_features(Tensor<float>::zeros({1, 3, 8, 8}), 8, 8, p, "b");
    for (float v : G.vec()) EXPECT_EQ(v, 0.0f);
}

TEST(GuidanceFeatures, ShapeAndPooling) {
    auto c = small_block(IntegrationMode::akgm);
    auto p = block_params(c, 2);
    auto G = compute_guidance_features(randn({1, 3, 32, 32}, 3), 8, 8, p, "b");
    EXPECT_EQ(G.shape(), (Shape{1, 4, 8, 8}));
    auto g = randn({1, 3, 8, 8}, 4);
    EXPECT_EQ(nn::avg_pool(g, 1, 1).vec(), g.vec());
    EXPECT_THROW(compute_guidance_features(randn({1, 3, 12, 12}, 3), 8, 8, p, "b"), PreconditionError);
}

TEST(ScalarFeatures, ZeroInputZeroBias) {
    auto p = block_params(small_block(IntegrationMode::akgm), 5);
    auto S = compute_scalar_features(Tensor<float>::zeros({2, 6}), p, "b");
    EXPECT_EQ(S.shape(), (Shape{2, 4, 1, 1}));
    for (float v : S.vec()) EXPECT_EQ(v, 0.0f);
}

TEST(ScalarFeatures, ShapeForThreeBases) {
    auto c = small_block(IntegrationMode::akgm);
    c.channels = 6;
    c.bases = 3;
    auto S = compute_scalar_features(randn({2, 6}, 1), block_params(c, 6), "b");
    EXPECT_EQ(S.shape(), (Shape{2, 3, 1, 1}));
}

TEST(ScalarFeatures, DependsOnGamma) {
    auto c = small_block(IntegrationMode::akgm);
    c.scalar_dim = networks::kScalarDim;
    auto p = block_params(c, 7);
    auto s1 = compute_scalar_features(networks::scalar_condition<float>({0.9}, {}), p, "b");
    auto s2 = compute_scalar_features(networks::scalar_condition<float>({0.2}, {}), p, "b");
    EXPECT_GT(testutil::max_abs_diff(s1.vec(), s2.vec()), 0.0);
}

TEST(ScalarFeatures, WidthMismatch) {
    auto p = block_params(small_block(IntegrationMode::akgm), 5);
    EXPECT_THROW(compute_scalar_features(Tensor<float>::zeros({2, 5}), p, "b"), PreconditionError);
}

TEST(FuseWeights, Identities) {
    auto G = randn({2, 3, 4, 4}, 1);
    EXPECT_EQ(fuse_weights(G, Tensor<float>::full({2, 3, 1, 1}, 1.0f)).vec(), G.vec());
    auto S = randn({2, 3, 1, 1}, 2);
    auto M = fuse_weights(Tensor<float>::full({2, 3, 4, 4}, 1.0f), S);
    for (std::size_t i = 0; i < M.size(); ++i) EXPECT_EQ(M[i], S[i / 16]);
}

TEST(FuseWeights, LoopOracle) {
    auto G = randn({2, 3, 4, 5}, 3), S = randn({2, 3, 1, 1}, 4);
    auto M = fuse_weights(G, S);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t n = 0; n < 3; ++n)
            for (std::size_t p = 0; p < 20; ++p) {
                const std::size_t i = (b * 3 + n) * 20 + p;
                EXPECT_EQ(M[i], G[i] * S[b * 3 + n]);
            }
    EXPECT_THROW(fuse_weights(G, randn({2, 2, 1, 1}, 5)), PreconditionError);
}

TEST(FuseWeights, SoftmaxOption) {
    auto M = fuse_weights(randn({1, 3, 2, 2}, 6), randn({1, 3, 1, 1}, 7), true);
    for (std::size_t p = 0; p < 4; ++p) EXPECT_NEAR(M[p] + M[4 + p] + M[8 + p], 1.0, 1e-6);
}

TEST(Akgm, OneHotSelectsBase) {
    auto x = randn({1, 4, 6, 6}, 8);
    KernelBases<float> kb(randn({2, 4, 2, 3, 3}, 9));
    for (std::size_t b = 0; b < 2; ++b) {
        std::vector<float> m(2 * 36, 0.0f);
        std::fill(m.begin() + b * 36, m.begin() + (b + 1) * 36, 1.0f);
        auto y = akgm_dynamic_conv(x, kb, Tensor<float>({1, 2, 6, 6}, m));
        auto ref = conv2d(x, kb.base(b), {}, {1, 1, 2});
        EXPECT_LT(testutil::rel_error(y.vec(), ref.vec()), 1e-6);
    }
}

TEST(Akgm, SingleBaseIsStaticConv) {
    auto x = randn({2, 3, 5, 5}, 10);
    KernelBases<float> kb(randn({1, 3, 3, 3, 3}, 11));
    auto y = akgm_dynamic_conv(x, kb, Tensor<float>::full({2, 1, 5, 5}, 1.0f));
    EXPECT_LT(testutil::rel_error(y.vec(), conv2d(x, kb.base(0), {}, {1, 1, 1}).vec()), 1e-6);
}

TEST(Akgm, MatchesKernelMaterialization) {
    auto x = randn({1, 4, 6, 6}, 12), bases = randn({2, 4, 2, 3, 3}, 13), M = randn({1, 2, 6, 6}, 14);
    auto y = akgm_dynamic_conv(x, KernelBases<float>(bases), M);
    EXPECT_LT(testutil::rel_error(y.vec(), testutil::akgm_oracle(x, bases, M)), 1e-5);
}

TEST(Akgm, RandomConfigurationsMatchOracle) {
    Rng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t B = 1 + rng.below(2), C = std::size_t(2) << rng.below(3), N = std::size_t(1) << rng.below(3);
        if (C % N) continue;
        const std::size_t H = 1 + rng.below(8), W = 1 + rng.below(8), k = rng.below(2) ? 3 : 1;
        auto x = randn({B, C, H, W}, 100 + trial), bases = randn({N, C, C / N, k, k}, 200 + trial),
             M = randn({B, N, H, W}, 300 + trial);
        auto y = akgm_dynamic_conv(x, KernelBases<float>(bases), M);
        EXPECT_LT(testutil::rel_error(y.vec(), testutil::akgm_oracle(x, bases, M)), 1e-5) << "trial " << trial;
    }
}

TEST(Akgm, ShapeErrors) {
    EXPECT_THROW(KernelBases<float>(randn({3, 4, 1, 3, 3}, 1)), PreconditionError);
    KernelBases<float> kb(randn({2, 4, 2, 3, 3}, 1));
    EXPECT_THROW(akgm_dynamic_conv(randn({1, 4, 5, 5}, 2), kb, randn({1, 2, 4, 5}, 3)), PreconditionError);
    EXPECT_THROW(akgm_dynamic_conv(randn({1, 6, 5, 5}, 2), kb, randn({1, 2, 5, 5}, 3)), PreconditionError);
}

TEST(Block, ZeroWeightsGiveIdentity) {
    for (auto mode : {IntegrationMode::akgm, IntegrationMode::addition, IntegrationMode::concatenation,
                      IntegrationMode::adain, IntegrationMode::none}) {
        auto c = small_block(mode);
        auto p = zero_params(block_params(c, 1));
        auto x = randn({2, 8, 4, 4}, 2);
        auto y = basic_block_forward(x, BlockContext<float>{randn({2, 3, 8, 8}, 3), randn({2, 6}, 4)}, c, p, "b");
        EXPECT_EQ(y.vec(), x.vec()) << to_string(mode);
    }
}

TEST(Block, ShapePreservedForEveryVariant) {
    for (auto mode : {IntegrationMode::akgm, IntegrationMode::addition, IntegrationMode::concatenation,
                      IntegrationMode::adain, IntegrationMode::none})
        for (auto norm : {NormMode::layer, NormMode::group, NormMode::none})
            for (auto act : {ActivationMode::swish, ActivationMode::relu})
                for (auto src : {GuidanceSource::initial_predictor, GuidanceSource::none}) {
                    auto c = small_block(mode);
                    c.norm = norm;
                    c.activation = act;
                    c.guidance = src;
                    auto x = randn({1, 8, 4, 4}, 5);
                    auto y = basic_block_forward(x, BlockContext<float>{randn({1, 3, 4, 4}, 6), randn({1, 6}, 7)}, c,
                                                 block_params(c, 8), "b");
                    EXPECT_EQ(y.shape(), x.shape());
                }
}

TEST(Block, AkgmAndAdditionDiffer) {
    auto x = randn({1, 8, 4, 4}, 9);
    BlockContext<float> ctx{randn({1, 3, 4, 4}, 10), randn({1, 6}, 11)};
    auto ca = small_block(IntegrationMode::akgm), cb = small_block(IntegrationMode::addition);
    auto pa = block_params(ca, 12), pb = block_params(cb, 12);
    auto ya = basic_block_forward(x, ctx, ca, pa, "b");
    auto yb = basic_block_forward(x, ctx, cb, pb, "b");
    EXPECT_GT(testutil::max_abs_diff(ya.vec(), yb.vec()), 0.0);
}

TEST(Block, MissingGuidanceOrMismatchedParams) {
    auto c = small_block(IntegrationMode::akgm);
    auto p = block_params(c, 1);
    EXPECT_THROW(basic_block_forward(randn({1, 8, 4, 4}, 1), BlockContext<float>{{}, randn({1, 6}, 2)}, c, p, "b"),
                 PreconditionError);
    auto other = c;
    other.channels = 4;
    EXPECT_THROW(basic_block_forward(randn({1, 4, 4, 4}, 1), BlockContext<float>{randn({1, 3, 4, 4}, 2), randn({1, 6}, 3)},
                                     other, p, "b"),
                 PreconditionError);
}

TEST(Block, ConfigValidation) {
    auto c = small_block(IntegrationMode::akgm);
    c.bases = 3;
    EXPECT_THROW(c.validate(), PreconditionError);
    EXPECT_THROW(parse_integration_mode("film"), PreconditionError);
    EXPECT_EQ(c.group_count(), 8u);
    c.channels = 64;
    EXPECT_EQ(c.group_count(), 32u);
}

TEST(Macs, FullScaleInstantiations) {
    LayerDesc d;
    d.H = d.W = 8;
    d.cin = d.cout = 4;
    d.k = 3;
    EXPECT_EQ(count_macs(d), 9216u);
    d.kind = LayerKind::akgm_grouped;
    EXPECT_EQ(count_macs(d), 9360u);
    d.kind = LayerKind::akgm_full;
    d.bases = 3;
    EXPECT_EQ(count_macs(d), 28080u);
}

TEST(Macs, GroupedOverStandardRatio) {
    for (std::uint64_t hw : {1, 7, 64, 1024}) {
        LayerDesc s;
        s.H = hw;
        s.W = 1;
        s.cin = s.cout = 16;
        s.k = 3;
        LayerDesc a = s;
        a.kind = LayerKind::akgm_grouped;
        EXPECT_EQ(count_macs(a) * hw, count_macs(s) * (hw + 1));
    }
}

TEST(Macs, UnknownKindAndGroups) {
    EXPECT_THROW(parse_layer_kind("depthwise_separable"), PreconditionError);
    LayerDesc d;
    d.kind = LayerKind::grouped_conv;
    d.cin = 6;
    d.cout = 6;
    d.groups = 4;
    EXPECT_THROW(count_macs(d), PreconditionError);
    d.groups = 3;
    EXPECT_EQ(count_macs(d), 12u);
}
