#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "condiff/core/error.hpp"

namespace condiff::tiling {

struct TileRect {
    std::size_t top = 0, left = 0, height = 0, width = 0;
};

/// Overlapping P x P tiles covering an H x W image.
///
/// Two merge rules are carried:
///  - feathered weights: linear ramps of width O on every tile edge that faces a
///    neighbour, renormalized so the weights sum to 1 at every pixel;
///  - hard ownership: each pixel belongs to one tile, switching at the midline of
///    every overlap. These midlines are the plan's seam lines.
class TilePlan {
public:
    std::size_t height() const { return H_; }
    std::size_t width() const { return W_; }
    std::size_t tile_size() const { return P_; }
    std::size_t overlap() const { return O_; }
    std::size_t count() const { return rects_.size(); }
    const std::vector<TileRect>& tiles() const { return rects_; }
    const TileRect& tile(std::size_t k) const { return rects_.at(k); }

    /// Normalized blend weight of tile k at tile-local (i, j).
    double weight(std::size_t k, std::size_t i, std::size_t j) const { return weights_[(k * P_ + i) * P_ + j]; }

    /// Tile owning image pixel (y, x) under hard ownership.
    std::size_t owner(std::size_t y, std::size_t x) const {
        return owner_axis(seam_rows_, y) * cols_.size() + owner_axis(seam_cols_, x);
    }

    /// Row indices r such that rows r-1 and r lie in different tiles.
    const std::vector<std::size_t>& seam_rows() const { return seam_rows_; }
    const std::vector<std::size_t>& seam_cols() const { return seam_cols_; }

    friend TilePlan plan_tiles(std::size_t H, std::size_t W, std::size_t P, std::size_t O, std::size_t divisor);

private:
    static std::size_t owner_axis(const std::vector<std::size_t>& seams, std::size_t c) {
        std::size_t k = 0;
        while (k < seams.size() && seams[k] <= c) ++k;
        return k;
    }

    std::size_t H_ = 0, W_ = 0, P_ = 0, O_ = 0;
    std::vector<std::size_t> rows_, cols_;
    std::vector<TileRect> rects_;
    std::vector<double> weights_;
    std::vector<std::size_t> seam_rows_, seam_cols_;
};

namespace detail {

/// Grid starts with stride P - O; the last tile is shifted inward to end at n.
inline std::vector<std::size_t> tile_starts(std::size_t n, std::size_t P, std::size_t O) {
    std::vector<std::size_t> s;
    for (std::size_t a = 0; a + P < n; a += P - O) s.push_back(a);
    s.push_back(n - P);
    return s;
}

/// Linear ramp on the sides that face another tile.
inline double edge_ramp(std::size_t i, std::size_t start, std::size_t P, std::size_t n, std::size_t O) {
    double w = 1.0;
    if (O == 0) return w;
    const double o = static_cast<double>(O);
    if (start > 0 && i < O) w = std::min(w, (static_cast<double>(i) + 0.5) / o);
    if (start + P < n && P - 1 - i < O) w = std::min(w, (static_cast<double>(P - 1 - i) + 0.5) / o);
    return w;
}

inline std::vector<std::size_t> midlines(const std::vector<std::size_t>& starts, std::size_t P) {
    std::vector<std::size_t> m;
    for (std::size_t k = 0; k + 1 < starts.size(); ++k) m.push_back((starts[k + 1] + starts[k] + P) / 2);
    return m;
}

} // namespace detail

inline TilePlan plan_tiles(std::size_t H, std::size_t W, std::size_t P, std::size_t O, std::size_t divisor = 1) {
    require(P >= 1 && P <= H && P <= W, "plan_tiles: tile size ", P, " does not fit a ", H, "x", W, " image");
    require(2 * O <= P, "plan_tiles: overlap ", O, " exceeds half the tile size ", P);
    require(divisor >= 1 && P % divisor == 0, "plan_tiles: tile size ", P, " not divisible by ", divisor);

    TilePlan plan;
    plan.H_ = H;
    plan.W_ = W;
    plan.P_ = P;
    plan.O_ = O;
    plan.rows_ = detail::tile_starts(H, P, O);
    plan.cols_ = detail::tile_starts(W, P, O);
    for (auto r : plan.rows_) {
        for (auto c : plan.cols_) plan.rects_.push_back({r, c, P, P});
    }

    const std::size_t n = plan.rects_.size();
    plan.weights_.assign(n * P * P, 0.0);
    std::vector<double> total(H * W, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& t = plan.rects_[k];
        for (std::size_t i = 0; i < P; ++i) {
            const double wy = detail::edge_ramp(i, t.top, P, H, O);
            for (std::size_t j = 0; j < P; ++j) {
                const double w = wy * detail::edge_ramp(j, t.left, P, W, O);
                plan.weights_[(k * P + i) * P + j] = w;
                total[(t.top + i) * W + t.left + j] += w;
            }
        }
    }
    for (std::size_t k = 0; k < n; ++k) {
        const auto& t = plan.rects_[k];
        for (std::size_t i = 0; i < P; ++i) {
            for (std::size_t j = 0; j < P; ++j) plan.weights_[(k * P + i) * P + j] /= total[(t.top + i) * W + t.left + j];
        }
    }
    plan.seam_rows_ = detail::midlines(plan.rows_, P);
    plan.seam_cols_ = detail::midlines(plan.cols_, P);
    return plan;
}

} // namespace condiff::tiling
