#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace condiff;
using testutil::randn;

namespace {
Tensor<float> ones(std::size_t c) { return Tensor<float>::full({c}, 1.0f); }
Tensor<float> zeros(std::size_t c) { return Tensor<float>::zeros({c}); }
} // namespace

TEST(LayerNorm, ConstantInputGivesZero) {
    auto y = nn::layer_norm_channels(Tensor<float>::full({1, 4, 3, 3}, 3.0f), ones(4), zeros(4));
    for (float v : y.vec()) EXPECT_EQ(v, 0.0f);
}

TEST(LayerNorm, TwoChannelSymmetry) {
    auto y = nn::layer_norm_channels(Tensor<float>({1, 2, 1, 1}, {1, -1}), ones(2), zeros(2));
    EXPECT_NEAR(y[0], 1.0, 1e-5);
    EXPECT_NEAR(y[1], -1.0, 1e-5);
}

TEST(LayerNorm, PerPixelStatistics) {
    const std::size_t C = 8, H = 5, W = 6;
    auto y = nn::layer_norm_channels(randn({2, C, H, W}, 1, 3.0), ones(C), zeros(C));
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t p = 0; p < H * W; ++p) {
            double m = 0, v = 0;
            for (std::size_t c = 0; c < C; ++c) m += y[(b * C + c) * H * W + p];
            m /= C;
            for (std::size_t c = 0; c < C; ++c) v += std::pow(y[(b * C + c) * H * W + p] - m, 2);
            v /= C;
            EXPECT_LT(std::abs(m), 1e-5);
            EXPECT_NEAR(v, 1.0, 1e-3);
        }
}

TEST(LayerNorm, ScaleCovariance) {
    auto x = randn<double>({1, 4, 3, 3}, 2);
    auto g = Tensor<double>::full({4}, 1.0), z = Tensor<double>::zeros({4});
    auto a = nn::layer_norm_channels(x, g, z, 0.0);
    auto b = nn::layer_norm_channels(scale(x, 7.5), g, z, 0.0);
    EXPECT_LT(testutil::max_abs_diff(a.vec(), b.vec()), 1e-12);
    auto c = nn::layer_norm_channels(scale(x, 7.5), g, z, 1e-6);
    EXPECT_LT(testutil::max_abs_diff(a.vec(), c.vec()), 1e-4);
}

TEST(LayerNorm, ZeroChannelsRejected) {
    EXPECT_THROW(nn::layer_norm_channels(Tensor<float>::zeros({1, 0, 2, 2}), zeros(0), zeros(0)), PreconditionError);
}

TEST(GroupNorm, SingleGroupIsInstanceNorm) {
    auto x = randn<double>({2, 4, 3, 3}, 3);
    auto y = nn::group_norm_channels(x, 1, Tensor<double>::full({4}, 1.0), Tensor<double>::zeros({4}), 1e-6);
    for (std::size_t b = 0; b < 2; ++b) {
        double m = 0, v = 0, mx = 0, vx = 0;
        for (std::size_t i = 0; i < 36; ++i) mx += x[b * 36 + i] / 36;
        for (std::size_t i = 0; i < 36; ++i) vx += std::pow(x[b * 36 + i] - mx, 2) / 36;
        for (std::size_t i = 0; i < 36; ++i) {
            EXPECT_NEAR(y[b * 36 + i], (x[b * 36 + i] - mx) / std::sqrt(vx + 1e-6), 1e-12);
            m += y[b * 36 + i] / 36;
        }
        for (std::size_t i = 0; i < 36; ++i) v += std::pow(y[b * 36 + i] - m, 2) / 36;
        EXPECT_NEAR(v, 1.0, 1e-5);
    }
}

TEST(GroupNorm, ConstantInputGivesZero) {
    auto y = nn::group_norm_channels(Tensor<float>::full({1, 4, 2, 2}, -2.0f), 2, ones(4), zeros(4));
    for (float v : y.vec()) EXPECT_EQ(v, 0.0f);
}

TEST(GroupNorm, PerGroupMean) {
    auto y = nn::group_norm_channels(randn({2, 6, 4, 4}, 4, 2.0), 3, ones(6), zeros(6));
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t g = 0; g < 3; ++g) {
            double m = 0;
            for (std::size_t i = 0; i < 32; ++i) m += y[(b * 6 + g * 2) * 16 + i];
            EXPECT_LT(std::abs(m / 32), 1e-5);
        }
}

TEST(GroupNorm, IndivisibleGroups) {
    EXPECT_THROW(nn::group_norm_channels(randn({1, 6, 2, 2}, 1), 4, ones(6), zeros(6)), PreconditionError);
}

TEST(Activations, Swish) {
    auto y = nn::swish(Tensor<float>({2}, {0.0f, 20.0f}));
    EXPECT_EQ(y[0], 0.0f);
    EXPECT_NEAR(y[1], 20.0f, 1e-6 * 20 + 1e-6);
}

TEST(Activations, Relu) {
    EXPECT_EQ(nn::relu(Tensor<float>({3}, {-1, 0, 2})).vec(), (std::vector<float>{0, 0, 2}));
}

TEST(Activations, SimpleGateWithOnesIsIdentity) {
    auto a = randn({2, 3, 4, 4}, 5);
    auto y = nn::simple_gate(concat_channels<float>({a, Tensor<float>::full({2, 3, 4, 4}, 1.0f)}));
    EXPECT_EQ(y.vec(), a.vec());
}

TEST(Activations, SimpleGateOddChannels) {
    EXPECT_THROW(nn::simple_gate(randn({1, 3, 2, 2}, 1)), PreconditionError);
}

TEST(Linear, IdentityWeight) {
    auto x = randn({3, 4}, 6);
    std::vector<float> eye(16, 0.0f);
    for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0f;
    auto y = nn::linear(x, Tensor<float>({4, 4}, eye), zeros(4));
    EXPECT_EQ(y.vec(), x.vec());
}

TEST(Linear, HandExample) {
    auto y = nn::linear(Tensor<float>({1, 2}, {2, 3}), Tensor<float>({1, 2}, {1, 1}), Tensor<float>({1}, {0}));
    EXPECT_EQ(y.vec(), (std::vector<float>{5}));
}

TEST(Linear, MatchesDotProductLoop) {
    auto x = randn({5, 7}, 7), w = randn({3, 7}, 8), b = randn({3}, 9);
    auto y = nn::linear(x, w, b);
    ASSERT_EQ(y.shape(), (Shape{5, 3}));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t o = 0; o < 3; ++o) {
            double s = b[o];
            for (std::size_t d = 0; d < 7; ++d) s += static_cast<double>(x[i * 7 + d]) * w[o * 7 + d];
            EXPECT_NEAR(y[i * 3 + o], s, 1e-6 * std::max(1.0, std::abs(s)));
        }
}

TEST(Linear, DimensionMismatch) {
    EXPECT_THROW(nn::linear(randn({2, 3}, 1), randn({4, 5}, 2), zeros(4)), PreconditionError);
}

TEST(Resample, UpsampleBlocks) {
    auto y = nn::nearest_upsample2x(Tensor<float>({1, 1, 2, 2}, {1, 2, 3, 4}));
    EXPECT_EQ(y.vec(), (std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(Resample, DownsampleConstant) {
    auto y = nn::avg_downsample(Tensor<float>::full({1, 2, 8, 8}, 0.25f), 4);
    EXPECT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
    for (float v : y.vec()) EXPECT_EQ(v, 0.25f);
}

TEST(Resample, DownUpIsIdentity) {
    auto x = randn({2, 3, 4, 5}, 10);
    EXPECT_EQ(nn::avg_downsample(nn::nearest_upsample2x(x), 2).vec(), x.vec());
}

TEST(Resample, IndivisibleFactor) {
    EXPECT_THROW(nn::avg_downsample(randn({1, 1, 6, 6}, 1), 4), PreconditionError);
}

TEST(InitParams, SameSeedBitIdentical) {
    const auto specs = networks::unet_specs(networks::UNetConfig{});
    auto a = nn::init_params<float>(specs, 5), b = nn::init_params<float>(specs, 5);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.entries()[i].tensor.vec(), b.entries()[i].tensor.vec());
}

TEST(InitParams, FanInStandardDeviation) {
    nn::ParamSpecs specs;
    nn::add_conv_specs(specs, "big", 128, 64, 3);
    auto p = nn::init_params<float>(specs, 11);
    const auto& w = p.at("big.weight").vec();
    double m = 0, v = 0;
    for (float e : w) m += e;
    m /= w.size();
    for (float e : w) v += (e - m) * (e - m);
    const double sd = std::sqrt(v / w.size());
    const double theory = std::sqrt(2.0 / (64 * 9)); // uniform(-sqrt(6/n), sqrt(6/n))
    EXPECT_NEAR(sd / theory, 1.0, 0.2);
    EXPECT_EQ(p.at("big.bias").vec(), std::vector<float>(128, 0.0f));
}

TEST(InitParams, NormScalesAndShifts) {
    nn::ParamSpecs specs;
    nn::add_norm_specs(specs, "n", 5);
    auto p = nn::init_params<float>(specs, 1);
    EXPECT_EQ(p.at("n.scale").vec(), std::vector<float>(5, 1.0f));
    EXPECT_EQ(p.at("n.shift").vec(), std::vector<float>(5, 0.0f));
}

TEST(InitParams, UNetCountMatchesClosedForm) {
    for (auto cfg : {networks::UNetConfig{}, networks::UNetConfig::full()}) {
        const auto store = nn::init_params<float>(networks::unet_specs(cfg), 1);
        EXPECT_EQ(store.parameter_count(), networks::unet_param_count_closed_form(cfg));
    }
    networks::UNetConfig c;
    c.integration = conditioning::IntegrationMode::concatenation;
    c.norm = conditioning::NormMode::group;
    c.guidance = conditioning::GuidanceSource::internal_feature;
    EXPECT_EQ(nn::count_params(networks::unet_specs(c)), networks::unet_param_count_closed_form(c));
    c.integration = conditioning::IntegrationMode::adain;
    c.norm = conditioning::NormMode::none;
    c.guidance = conditioning::GuidanceSource::none;
    EXPECT_EQ(nn::count_params(networks::unet_specs(c)), networks::unet_param_count_closed_form(c));
}

TEST(ParamStore, DuplicateNamesRejected) {
    nn::ParamStore<float> p;
    p.add("a", zeros(2));
    EXPECT_THROW(p.add("a", zeros(2)), PreconditionError);
    EXPECT_THROW(p.at("b"), PreconditionError);
}
