#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "condiff/core/rng.hpp"
#include "condiff/tensor/tensor.hpp"

namespace condiff::data {

enum class PatternKind { gradient, checker, smooth_noise, shapes };

inline std::string to_string(PatternKind k) {
    switch (k) {
    case PatternKind::gradient: return "gradient";
    case PatternKind::checker: return "checker";
    case PatternKind::smooth_noise: return "smooth_noise";
    case PatternKind::shapes: return "shapes";
    }
    return "?";
}

namespace detail {

struct Color {
    double c[3];
};

inline Color random_color(Rng& rng) { return {{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)}}; }

inline double smoothstep_edge(double d, double width) { return 1.0 / (1.0 + std::exp(-d / width)); }

} // namespace detail

/// One synthetic [1,3,H,W] image in [0,1]. Content is mostly low frequency with
/// soft edges so that a small denoiser can restore it accurately.
inline Tensor<float> procedural_image(PatternKind kind, std::size_t H, std::size_t W, Rng& rng) {
    std::vector<float> data(3 * H * W);
    auto put = [&](std::size_t c, std::size_t i, std::size_t j, double v) {
        data[(c * H + i) * W + j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    };
    const double h = static_cast<double>(H), w = static_cast<double>(W);
    switch (kind) {
    case PatternKind::gradient: {
        const auto a = detail::random_color(rng), b = detail::random_color(rng);
        const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double dx = std::cos(th), dy = std::sin(th);
        const double span = std::abs(dx) * w + std::abs(dy) * h;
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                const double t = ((static_cast<double>(j) - w / 2) * dx + (static_cast<double>(i) - h / 2) * dy) / span + 0.5;
                for (std::size_t c = 0; c < 3; ++c) put(c, i, j, a.c[c] + (b.c[c] - a.c[c]) * t);
            }
        }
        break;
    }
    case PatternKind::checker: {
        const auto a = detail::random_color(rng), b = detail::random_color(rng);
        const double cell = rng.uniform(8.0, 16.0), phx = rng.uniform(0.0, cell), phy = rng.uniform(0.0, cell);
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                const double s = std::sin(std::numbers::pi * (static_cast<double>(j) + phx) / cell) *
                                 std::sin(std::numbers::pi * (static_cast<double>(i) + phy) / cell);
                const double t = 0.5 + 0.5 * std::tanh(3.0 * s);
                for (std::size_t c = 0; c < 3; ++c) put(c, i, j, a.c[c] + (b.c[c] - a.c[c]) * t);
            }
        }
        break;
    }
    case PatternKind::smooth_noise: {
        const std::size_t g = 3 + rng.below(3);
        std::vector<detail::Color> grid((g + 1) * (g + 1));
        for (auto& c : grid) c = detail::random_color(rng);
        for (std::size_t i = 0; i < H; ++i) {
            const double fy = static_cast<double>(i) / h * static_cast<double>(g);
            const std::size_t y0 = static_cast<std::size_t>(fy);
            const double ty = fy - static_cast<double>(y0);
            const double sy = ty * ty * (3 - 2 * ty);
            for (std::size_t j = 0; j < W; ++j) {
                const double fx = static_cast<double>(j) / w * static_cast<double>(g);
                const std::size_t x0 = static_cast<std::size_t>(fx);
                const double tx = fx - static_cast<double>(x0);
                const double sx = tx * tx * (3 - 2 * tx);
                for (std::size_t c = 0; c < 3; ++c) {
                    const double v00 = grid[y0 * (g + 1) + x0].c[c], v01 = grid[y0 * (g + 1) + x0 + 1].c[c];
                    const double v10 = grid[(y0 + 1) * (g + 1) + x0].c[c], v11 = grid[(y0 + 1) * (g + 1) + x0 + 1].c[c];
                    put(c, i, j, (1 - sy) * ((1 - sx) * v00 + sx * v01) + sy * ((1 - sx) * v10 + sx * v11));
                }
            }
        }
        break;
    }
    case PatternKind::shapes: {
        const auto bg = detail::random_color(rng);
        const std::size_t n = 1 + rng.below(3);
        struct Disk {
            double cy, cx, r;
            detail::Color col;
        };
        std::vector<Disk> disks;
        for (std::size_t k = 0; k < n; ++k) {
            disks.push_back({rng.uniform(0.0, h), rng.uniform(0.0, w), rng.uniform(0.15, 0.4) * std::min(h, w),
                             detail::random_color(rng)});
        }
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                double v[3] = {bg.c[0], bg.c[1], bg.c[2]};
                for (const auto& d : disks) {
                    const double dist = std::hypot(static_cast<double>(i) - d.cy, static_cast<double>(j) - d.cx);
                    const double a = detail::smoothstep_edge(d.r - dist, 1.5);
                    for (std::size_t c = 0; c < 3; ++c) v[c] = (1 - a) * v[c] + a * d.col.c[c];
                }
                for (std::size_t c = 0; c < 3; ++c) put(c, i, j, v[c]);
            }
        }
        break;
    }
    }
    return Tensor<float>(Shape{1, 3, H, W}, std::move(data));
}

/// `count` images cycling through the pattern kinds.
inline std::vector<Tensor<float>> procedural_corpus(std::size_t count, std::size_t H, std::size_t W,
                                                    std::uint64_t seed) {
    Rng rng(seed);
    const PatternKind kinds[] = {PatternKind::gradient, PatternKind::checker, PatternKind::smooth_noise,
                                 PatternKind::shapes};
    std::vector<Tensor<float>> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(procedural_image(kinds[i % 4], H, W, rng));
    return out;
}

} // namespace condiff::data
