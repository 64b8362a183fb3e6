#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "condiff/diffusion/sampler.hpp"
#include "condiff/tiling/plan.hpp"

namespace condiff::tiling {

/// eps_hat for a window of the state. The callee crops its own conditioning
/// (x, guidance) with `rect`; z_t is already cropped.
using RegionDenoiser = std::function<Tensor<float>(const Tensor<float>& z_t, double gamma, const TileRect& rect)>;

enum class MergeMode { feather, hard };

inline TileRect full_rect(const Shape& s) { return TileRect{0, 0, s.at(2), s.at(3)}; }

inline void check_plan(const Shape& s, const TilePlan& plan) {
    require(s.size() == 4 && s[2] == plan.height() && s[3] == plan.width(), "tiling: plan for ", plan.height(), "x",
            plan.width(), " does not match tensor ", shape_str(s));
}

/// Blends per-tile tensors [B,C,P,P] into one [B,C,H,W] tensor.
inline Tensor<float> merge_tiles(const std::vector<Tensor<float>>& parts, const TilePlan& plan, MergeMode mode) {
    require(parts.size() == plan.count(), "merge_tiles: ", parts.size(), " tiles for a plan of ", plan.count());
    const std::size_t B = parts[0].dim(0), C = parts[0].dim(1), H = plan.height(), W = plan.width(),
                      P = plan.tile_size();
    std::vector<double> acc(B * C * H * W, 0.0);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& t = plan.tile(k);
        const auto& v = parts[k].vec();
        require(parts[k].shape() == Shape({B, C, P, P}), "merge_tiles: tile ", k, " has shape ",
                shape_str(parts[k].shape()));
        for (std::size_t bc = 0; bc < B * C; ++bc) {
            for (std::size_t i = 0; i < P; ++i) {
                for (std::size_t j = 0; j < P; ++j) {
                    const std::size_t y = t.top + i, xx = t.left + j;
                    double w;
                    if (mode == MergeMode::feather) {
                        w = plan.weight(k, i, j);
                    } else {
                        w = plan.owner(y, xx) == k ? 1.0 : 0.0;
                    }
                    acc[(bc * H + y) * W + xx] += w * static_cast<double>(v[(bc * P + i) * P + j]);
                }
            }
        }
    }
    std::vector<float> out(acc.begin(), acc.end());
    return Tensor<float>(Shape{B, C, H, W}, std::move(out));
}

/// One denoising step evaluated tile by tile and blended with the plan's feather
/// weights. Tiles may run on `workers` threads; the merge order is fixed.
inline Tensor<float> tiled_denoise_step(const Tensor<float>& z_t, double gamma, const RegionDenoiser& f,
                                        const TilePlan& plan, std::size_t workers = 1) {
    check_plan(z_t.shape(), plan);
    if (plan.count() == 1) return f(z_t, gamma, plan.tile(0));
    std::vector<Tensor<float>> parts(plan.count());
    auto run = [&](std::size_t k) {
        const auto& t = plan.tile(k);
        parts[k] = f(crop(z_t, t.top, t.left, t.height, t.width), gamma, t);
    };
    if (workers <= 1) {
        for (std::size_t k = 0; k < plan.count(); ++k) run(k);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t k = w; k < plan.count(); k += workers) run(k);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    return merge_tiles(parts, plan, MergeMode::feather);
}

/// Inter-step patch splitting: one global state; each step's eps_hat is assembled
/// from tiles.
inline Tensor<float> sample_residual_tiled(const Shape& shape, const RegionDenoiser& f,
                                           const diffusion::NoiseSchedule& schedule, const TilePlan& plan, Rng& rng,
                                           std::size_t workers = 1) {
    check_plan(shape, plan);
    const diffusion::Denoiser step = [&](const Tensor<float>& z, double g) {
        return tiled_denoise_step(z, g, f, plan, workers);
    };
    return diffusion::sample_residual(shape, step, schedule, rng);
}

/// Untiled sampling through a region denoiser (the whole image is one region).
inline Tensor<float> sample_residual_full(const Shape& shape, const RegionDenoiser& f,
                                          const diffusion::NoiseSchedule& schedule, Rng& rng) {
    const TileRect all = full_rect(shape);
    const diffusion::Denoiser step = [&](const Tensor<float>& z, double g) { return f(z, g, all); };
    return diffusion::sample_residual(shape, step, schedule, rng);
}

/// Baseline: an independent reverse chain per tile (tile k draws from rng.fork(k + 1)),
/// merged once at the end.
inline Tensor<float> sample_residual_naive_tiled(const Shape& shape, const RegionDenoiser& f,
                                                 const diffusion::NoiseSchedule& schedule, const TilePlan& plan,
                                                 Rng& rng, MergeMode mode = MergeMode::hard) {
    check_plan(shape, plan);
    if (plan.count() == 1) return sample_residual_full(shape, f, schedule, rng);
    std::vector<Tensor<float>> parts;
    const Shape tile_shape{shape[0], shape[1], plan.tile_size(), plan.tile_size()};
    for (std::size_t k = 0; k < plan.count(); ++k) {
        Rng tile_rng = rng.fork(k + 1);
        const TileRect t = plan.tile(k);
        const diffusion::Denoiser step = [&](const Tensor<float>& z, double g) { return f(z, g, t); };
        parts.push_back(diffusion::sample_residual(tile_shape, step, schedule, tile_rng));
    }
    return merge_tiles(parts, plan, mode);
}

struct SeamReport {
    double boundary = 0.0;
    double interior = 0.0;
    double ratio = 1.0;
};

/// Mean |finite difference| across the plan's seam lines versus everywhere else.
/// 0/0 and single-tile plans give ratio 1; a seam over a flat interior gives +inf.
inline SeamReport seam_metric(const Tensor<float>& image, const TilePlan& plan) {
    check_plan(image.shape(), plan);
    const std::size_t BC = image.dim(0) * image.dim(1), H = image.dim(2), W = image.dim(3);
    std::vector<char> seam_row(H + 1, 0), seam_col(W + 1, 0);
    for (auto r : plan.seam_rows()) seam_row[r] = 1;
    for (auto c : plan.seam_cols()) seam_col[c] = 1;
    const auto& v = image.vec();
    double bsum = 0.0, isum = 0.0;
    std::size_t bn = 0, in = 0;
    for (std::size_t p = 0; p < BC; ++p) {
        const float* img = v.data() + p * H * W;
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                if (j + 1 < W) {
                    const double d = std::abs(static_cast<double>(img[i * W + j + 1]) - img[i * W + j]);
                    if (seam_col[j + 1]) {
                        bsum += d;
                        ++bn;
                    } else {
                        isum += d;
                        ++in;
                    }
                }
                if (i + 1 < H) {
                    const double d = std::abs(static_cast<double>(img[(i + 1) * W + j]) - img[i * W + j]);
                    if (seam_row[i + 1]) {
                        bsum += d;
                        ++bn;
                    } else {
                        isum += d;
                        ++in;
                    }
                }
            }
        }
    }
    SeamReport r;
    r.boundary = bn ? bsum / static_cast<double>(bn) : 0.0;
    r.interior = in ? isum / static_cast<double>(in) : 0.0;
    if (plan.count() == 1 || (r.boundary == 0.0 && r.interior == 0.0)) {
        r.ratio = 1.0;
    } else if (r.interior == 0.0) {
        r.ratio = std::numeric_limits<double>::infinity();
    } else {
        r.ratio = r.boundary / r.interior;
    }
    return r;
}

inline void write_seam_row(std::ostream& os, const SeamReport& r) {
    os << r.boundary << ' ' << r.interior << ' ' << r.ratio << '\n';
}

} // namespace condiff::tiling
