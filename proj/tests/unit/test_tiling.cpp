#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace condiff;
using namespace condiff::tiling;
using testutil::randn;

namespace {

/// Per-pixel denoiser with conditioning cropped by the region: tanh(z) * (1 + cond).
RegionDenoiser pointwise(const Tensor<float>& cond) {
    return [cond](const Tensor<float>& z, double g, const TileRect& r) {
        const auto c = crop(cond, r.top, r.left, r.height, r.width);
        std::vector<float> out(z.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = static_cast<float>(std::tanh(z[i]) * (1.0 + c[i]) * g);
        }
        return Tensor<float>(z.shape(), std::move(out));
    };
}

/// 3x3 box filter with zero padding: couples neighbouring pixels.
RegionDenoiser smoothing() {
    return [](const Tensor<float>& z, double, const TileRect&) {
        const std::size_t C = z.dim(1);
        auto w = Tensor<float>::full({C, 1, 3, 3}, 1.0f / 9.0f);
        return conv2d(z, w, {}, {1, 1, C}).detach();
    };
}

std::vector<double> weight_sums(const TilePlan& plan) {
    std::vector<double> s(plan.height() * plan.width(), 0.0);
    for (std::size_t k = 0; k < plan.count(); ++k) {
        const auto& t = plan.tile(k);
        for (std::size_t i = 0; i < t.height; ++i)
            for (std::size_t j = 0; j < t.width; ++j) s[(t.top + i) * plan.width() + t.left + j] += plan.weight(k, i, j);
    }
    return s;
}

} // namespace

TEST(PlanTiles, SingleTileAllOnes) {
    const auto p = plan_tiles(64, 64, 64, 16);
    ASSERT_EQ(p.count(), 1u);
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 0; j < 64; ++j) EXPECT_EQ(p.weight(0, i, j), 1.0);
    EXPECT_TRUE(p.seam_rows().empty());
}

TEST(PlanTiles, TwoByOneGrid) {
    const auto p = plan_tiles(96, 64, 64, 32);
    ASSERT_EQ(p.count(), 2u);
    EXPECT_EQ(p.tile(0).top, 0u);
    EXPECT_EQ(p.tile(1).top, 32u);
    EXPECT_EQ(p.tile(1).left, 0u);
    for (double s : weight_sums(p)) EXPECT_NEAR(s, 1.0, 1e-6);
    EXPECT_EQ(p.seam_rows(), (std::vector<std::size_t>{48}));
}

TEST(PlanTiles, RandomGeometriesCoverAndSumToOne) {
    Rng rng(3);
    for (int n = 0; n < 50; ++n) {
        const std::size_t P = 8 * (1 + rng.below(6));
        const std::size_t O = rng.below(P / 2 + 1);
        const std::size_t H = P + rng.below(100), W = P + rng.below(100);
        const auto p = plan_tiles(H, W, P, O, 8);
        std::vector<int> cover(H * W, 0);
        for (const auto& t : p.tiles()) {
            EXPECT_LE(t.top + t.height, H);
            EXPECT_LE(t.left + t.width, W);
            EXPECT_EQ(t.height % 8, 0u);
            for (std::size_t i = 0; i < t.height; ++i)
                for (std::size_t j = 0; j < t.width; ++j) ++cover[(t.top + i) * W + t.left + j];
        }
        for (int c : cover) ASSERT_GE(c, 1) << H << "x" << W << " P " << P << " O " << O;
        for (double s : weight_sums(p)) ASSERT_NEAR(s, 1.0, 1e-6);
        for (std::size_t y = 0; y < H; y += 7)
            for (std::size_t x = 0; x < W; x += 5) {
                const auto& t = p.tile(p.owner(y, x));
                EXPECT_TRUE(y >= t.top && y < t.top + t.height && x >= t.left && x < t.left + t.width);
            }
    }
}

TEST(PlanTiles, InfeasibleGeometry) {
    EXPECT_THROW(plan_tiles(32, 32, 64, 8), PreconditionError);
    EXPECT_THROW(plan_tiles(128, 128, 64, 33), PreconditionError);
    EXPECT_THROW(plan_tiles(128, 128, 60, 8, 16), PreconditionError);
}

TEST(TiledStep, SingleTileBitIdentical) {
    auto z = randn({1, 3, 32, 32}, 1), cond = randn({1, 3, 32, 32}, 2);
    const auto plan = plan_tiles(32, 32, 32, 8);
    const auto f = pointwise(cond);
    EXPECT_EQ(tiled_denoise_step(z, 0.5, f, plan).vec(), f(z, 0.5, full_rect(z.shape())).vec());
}

TEST(TiledStep, TranslationInvariantDenoiserGivesConstant) {
    auto z = Tensor<float>::full({1, 3, 80, 80}, 0.3f);
    auto cond = Tensor<float>::full({1, 3, 80, 80}, 0.5f);
    const auto plan = plan_tiles(80, 80, 32, 8);
    auto out = tiled_denoise_step(z, 0.7, pointwise(cond), plan);
    EXPECT_EQ(out.shape(), z.shape());
    const float ref = out[0];
    for (float v : out.vec()) EXPECT_NEAR(v, ref, 1e-5);
}

TEST(TiledStep, WorkersDoNotChangeResult) {
    auto z = randn({2, 3, 80, 80}, 3);
    const auto plan = plan_tiles(80, 80, 32, 8);
    EXPECT_EQ(tiled_denoise_step(z, 0.5, smoothing(), plan, 1).vec(),
              tiled_denoise_step(z, 0.5, smoothing(), plan, 3).vec());
}

TEST(TiledStep, PlanMismatch) {
    const auto plan = plan_tiles(64, 64, 32, 8);
    EXPECT_THROW(tiled_denoise_step(randn({1, 3, 64, 48}, 1), 0.5, smoothing(), plan), PreconditionError);
}

TEST(TiledSampler, SingleTileBitIdenticalToUntiled) {
    const auto s = diffusion::NoiseSchedule::linear(10, 1e-3, 0.2);
    auto cond = randn({1, 3, 16, 16}, 4);
    const auto plan = plan_tiles(16, 16, 16, 4);
    Rng a(9), b(9), c(9);
    const auto full = sample_residual_full({1, 3, 16, 16}, pointwise(cond), s, a);
    EXPECT_EQ(sample_residual_tiled({1, 3, 16, 16}, pointwise(cond), s, plan, b).vec(), full.vec());
    EXPECT_EQ(sample_residual_naive_tiled({1, 3, 16, 16}, pointwise(cond), s, plan, c).vec(), full.vec());
}

TEST(TiledSampler, LargeImageSmoke) {
    const auto s = diffusion::NoiseSchedule::linear(5, 1e-3, 0.2);
    auto cond = randn({1, 3, 256, 256}, 5);
    const auto plan = plan_tiles(256, 256, 128, 32);
    Rng rng(6);
    const auto r = sample_residual_tiled({1, 3, 256, 256}, pointwise(cond), s, plan, rng);
    EXPECT_EQ(r.shape(), (Shape{1, 3, 256, 256}));
    for (float v : r.vec()) ASSERT_TRUE(std::isfinite(v));
}

TEST(NaiveSampler, IndependentChainsDisagreeInOverlap) {
    const auto s = diffusion::NoiseSchedule::linear(10, 1e-3, 0.2);
    const Shape shape{1, 3, 16, 28};
    const auto plan = plan_tiles(16, 28, 16, 4);
    ASSERT_EQ(plan.count(), 2u);
    const auto f = pointwise(Tensor<float>::full(shape, 0.2f));
    Rng rng(7);
    std::vector<Tensor<float>> tiles;
    for (std::size_t k = 0; k < 2; ++k) {
        Rng tr = rng.fork(k + 1);
        const auto t = plan.tile(k);
        const diffusion::Denoiser d = [&](const Tensor<float>& z, double g) { return f(z, g, t); };
        tiles.push_back(diffusion::sample_residual({1, 3, 16, 16}, d, s, tr));
    }
    // Tile 0 spans columns 0..15, tile 1 spans 12..27.
    const std::size_t off = plan.tile(1).left;
    ASSERT_EQ(off, 12u);
    double disagreement = 0;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = off; j < 16; ++j) {
                disagreement += std::abs(tiles[0][(c * 16 + i) * 16 + j] - tiles[1][(c * 16 + i) * 16 + j - off]);
            }
    EXPECT_GT(disagreement, 0.0);

    Rng again(7);
    const auto merged = sample_residual_naive_tiled(shape, f, s, plan, again);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t x = 0; x < 28; ++x) {
                const std::size_t k = plan.owner(i, x);
                const float expect = tiles[k][(c * 16 + i) * 16 + x - plan.tile(k).left];
                ASSERT_EQ(merged[(c * 16 + i) * 28 + x], expect);
            }
}

TEST(NaiveSampler, Deterministic) {
    const auto s = diffusion::NoiseSchedule::linear(5, 1e-3, 0.2);
    const auto plan = plan_tiles(40, 40, 24, 8);
    Rng a(3), b(3);
    EXPECT_EQ(sample_residual_naive_tiled({1, 3, 40, 40}, smoothing(), s, plan, a).vec(),
              sample_residual_naive_tiled({1, 3, 40, 40}, smoothing(), s, plan, b).vec());
}

TEST(MergeTiles, ConstantTilesGiveConstant) {
    const auto plan = plan_tiles(50, 70, 24, 6);
    std::vector<Tensor<float>> parts(plan.count(), Tensor<float>::full({1, 2, 24, 24}, 0.25f));
    for (auto mode : {MergeMode::feather, MergeMode::hard}) {
        for (float v : merge_tiles(parts, plan, mode).vec()) EXPECT_NEAR(v, 0.25f, 1e-7);
    }
}

TEST(SeamMetric, ConstantImage) {
    const auto plan = plan_tiles(64, 64, 32, 8);
    const auto r = seam_metric(Tensor<float>::full({1, 3, 64, 64}, 0.5f), plan);
    EXPECT_EQ(r.boundary, 0.0);
    EXPECT_EQ(r.interior, 0.0);
    EXPECT_EQ(r.ratio, 1.0);
}

TEST(SeamMetric, StepOnSeamLine) {
    const auto plan = plan_tiles(64, 64, 32, 0);
    ASSERT_EQ(plan.seam_cols(), (std::vector<std::size_t>{32}));
    std::vector<float> v(64 * 64);
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 0; j < 64; ++j) v[i * 64 + j] = (j >= 32 ? 0.6f : 0.2f) + 0.001f * static_cast<float>(i + j);
    const auto r = seam_metric(Tensor<float>({1, 1, 64, 64}, v), plan);
    // 64 pairs across column 32 differ by 0.401, the 64 across row 32 by 0.001.
    EXPECT_NEAR(r.boundary, (64 * 0.401 + 64 * 0.001) / 128.0, 1e-4);
    EXPECT_GT(r.ratio, 100.0);
}

TEST(SeamMetric, SmoothRampNearOne) {
    const auto plan = plan_tiles(64, 64, 32, 8);
    std::vector<float> v(64 * 64);
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 0; j < 64; ++j) v[i * 64 + j] = 0.01f * static_cast<float>(i) + 0.005f * static_cast<float>(j);
    EXPECT_NEAR(seam_metric(Tensor<float>({1, 1, 64, 64}, v), plan).ratio, 1.0, 0.1);
}

TEST(SeamMetric, SingleTileIsOne) {
    EXPECT_EQ(seam_metric(randn({1, 3, 16, 16}, 1), plan_tiles(16, 16, 16, 0)).ratio, 1.0);
}
