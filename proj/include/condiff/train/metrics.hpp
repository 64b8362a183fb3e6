#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "condiff/tensor/tensor.hpp"

namespace condiff::train {

inline constexpr double kPsnrCap = 99.0;

inline double mse(const Tensor<float>& a, const Tensor<float>& b) {
    require(a.shape() == b.shape(), "mse: shapes ", shape_str(a.shape()), " and ", shape_str(b.shape()), " differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

/// 10 log10(peak^2 / MSE); +inf for identical inputs.
inline double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0) {
    require(peak > 0.0, "psnr: peak must be positive");
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

/// PSNR for tables: capped at 99 dB.
inline double psnr_capped(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0) {
    return std::min(kPsnrCap, psnr(a, b, peak));
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// over valid window positions, averaged over positions, channels and batch.
inline double ssim(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0) {
    require(a.shape() == b.shape(), "ssim: shapes ", shape_str(a.shape()), " and ", shape_str(b.shape()), " differ");
    require(a.rank() == 4, "ssim: expected [B,C,H,W], got ", shape_str(a.shape()));
    constexpr int R = 5, K = 2 * R + 1;
    const std::size_t BC = a.dim(0) * a.dim(1), H = a.dim(2), W = a.dim(3);
    require(H >= K && W >= K, "ssim: images must be at least ", K, "x", K);
    double g[K], gs = 0.0;
    for (int i = 0; i < K; ++i) {
        g[i] = std::exp(-static_cast<double>((i - R) * (i - R)) / (2.0 * 1.5 * 1.5));
        gs += g[i];
    }
    for (auto& v : g) v /= gs;
    const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < BC; ++p) {
        const float* x = a.vec().data() + p * H * W;
        const float* y = b.vec().data() + p * H * W;
        for (std::size_t i = 0; i + K <= H; ++i) {
            for (std::size_t j = 0; j + K <= W; ++j) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int u = 0; u < K; ++u) {
                    for (int v = 0; v < K; ++v) {
                        const double w = g[u] * g[v];
                        const double xv = x[(i + u) * W + j + v], yv = y[(i + u) * W + j + v];
                        mx += w * xv;
                        my += w * yv;
                        sxx += w * xv * xv;
                        syy += w * yv * yv;
                        sxy += w * xv * yv;
                    }
                }
                const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
                total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

} // namespace condiff::train
