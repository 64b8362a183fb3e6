#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "condiff/condiff.hpp"

namespace testutil {

using condiff::Rng;
using condiff::Shape;
using condiff::Tensor;

template <class T = float>
Tensor<T> randn(const Shape& s, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    std::vector<T> v(condiff::numel(s));
    for (auto& e : v) e = static_cast<T>(scale * rng.normal());
    return Tensor<T>(s, std::move(v));
}

template <class T = float>
Tensor<T> randu(const Shape& s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    std::vector<T> v(condiff::numel(s));
    for (auto& e : v) e = static_cast<T>(rng.uniform(lo, hi));
    return Tensor<T>(s, std::move(v));
}

/// max |a - b| / max(|b|_inf, tiny)
template <class A, class B>
double rel_error(const A& a, const B& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        num = std::max(num, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
        den = std::max(den, std::abs(static_cast<double>(b[i])));
    }
    return num / std::max(den, 1e-30);
}

template <class A, class B>
double max_abs_diff(const A& a, const B& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

/// Direct-summation cross-correlation with zero padding.
inline std::vector<double> conv_oracle(const Tensor<float>& x, const Tensor<float>& w, const Tensor<float>* bias,
                                       std::size_t stride, std::size_t pad, std::size_t groups) {
    const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Cout = w.dim(0), cpg = w.dim(1), k = w.dim(2);
    const std::size_t Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
    const std::size_t opg = Cout / groups;
    std::vector<double> out(B * Cout * Ho * Wo, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Cout; ++o)
            for (std::size_t i = 0; i < Ho; ++i)
                for (std::size_t j = 0; j < Wo; ++j) {
                    double s = bias ? (*bias)[o] : 0.0;
                    const std::size_t g = o / opg;
                    for (std::size_t c = 0; c < cpg; ++c)
                        for (std::size_t u = 0; u < k; ++u)
                            for (std::size_t v = 0; v < k; ++v) {
                                const long yi = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                                const long xj = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                                if (yi < 0 || xj < 0 || yi >= static_cast<long>(H) || xj >= static_cast<long>(W)) continue;
                                const std::size_t ci = g * cpg + c;
                                s += static_cast<double>(x[((b * Cin + ci) * H + yi) * W + xj]) *
                                     w[((o * cpg + c) * k + u) * k + v];
                            }
                    out[((b * Cout + o) * Ho + i) * Wo + j] = s;
                }
    (void)Cin;
    return out;
}

/// Materializes F_ij = sum_b M[b,i,j] W_b at every position and applies it directly.
inline std::vector<double> akgm_oracle(const Tensor<float>& x, const Tensor<float>& bases, const Tensor<float>& M) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t N = bases.dim(0), cg = bases.dim(2), k = bases.dim(3), r = k / 2;
    std::vector<double> out(B * C * H * W, 0.0), F(C * cg * k * k);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                std::fill(F.begin(), F.end(), 0.0);
                for (std::size_t n = 0; n < N; ++n) {
                    const double m = M[((b * N + n) * H + i) * W + j];
                    for (std::size_t e = 0; e < F.size(); ++e) F[e] += m * bases[n * F.size() + e];
                }
                for (std::size_t o = 0; o < C; ++o) {
                    const std::size_t g = o / cg;
                    double s = 0.0;
                    for (std::size_t c = 0; c < cg; ++c)
                        for (std::size_t u = 0; u < k; ++u)
                            for (std::size_t v = 0; v < k; ++v) {
                                const long yi = static_cast<long>(i + u) - static_cast<long>(r);
                                const long xj = static_cast<long>(j + v) - static_cast<long>(r);
                                if (yi < 0 || xj < 0 || yi >= static_cast<long>(H) || xj >= static_cast<long>(W)) continue;
                                s += F[((o * cg + c) * k + u) * k + v] * x[((b * C + g * cg + c) * H + yi) * W + xj];
                            }
                    out[((b * C + o) * H + i) * W + j] = s;
                }
            }
    return out;
}

inline std::string temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("condiff_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

} // namespace testutil
