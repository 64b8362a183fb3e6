#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <vector>

#include "condiff/tensor/tensor.hpp"

namespace condiff {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// Geometry of a square-kernel 2-D cross-correlation on one image plane stack.
struct ConvGeom {
    std::size_t channels = 0; // input channels seen by one group
    std::size_t H = 0, W = 0;
    std::size_t k = 1, stride = 1, pad = 0;
    std::size_t Ho = 0, Wo = 0;

    std::size_t rows() const { return channels * k * k; }
    std::size_t cols() const { return Ho * Wo; }
    bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

inline std::size_t conv_out_size(std::size_t n, std::size_t k, std::size_t stride, std::size_t pad) {
    require(n + 2 * pad >= k, "conv: kernel ", k, " larger than padded extent ", n + 2 * pad);
    return (n + 2 * pad - k) / stride + 1;
}

/// Unfolds receptive fields: row (c, ki, kj), column (oy, ox). Zero padding.
template <class T>
void im2col(const T* img, const ConvGeom& g, T* col) {
    const std::size_t P = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        const T* plane = img + c * g.H * g.W;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                T* row = col + ((c * g.k + ki) * g.k + kj) * P;
                for (std::size_t oy = 0; oy < g.Ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                              static_cast<std::ptrdiff_t>(g.pad);
                    T* dst = row + oy * g.Wo;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.H)) {
                        std::fill_n(dst, g.Wo, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * g.W;
                    for (std::size_t ox = 0; ox < g.Wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.W))
                                      ? T(0)
                                      : src[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters column entries back onto the image (accumulating).
template <class T>
void col2im(const T* col, const ConvGeom& g, T* img) {
    const std::size_t P = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        T* plane = img + c * g.H * g.W;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                const T* row = col + ((c * g.k + ki) * g.k + kj) * P;
                for (std::size_t oy = 0; oy < g.Ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                              static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.H)) continue;
                    T* dst = plane + static_cast<std::size_t>(iy) * g.W;
                    const T* src = row + oy * g.Wo;
                    for (std::size_t ox = 0; ox < g.Wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.W)) {
                            dst[static_cast<std::size_t>(ix)] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

} // namespace detail

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;
};

/// Grouped 2-D cross-correlation with zero padding.
/// input [B,Cin,H,W], weight [Cout, Cin/groups, k, k], bias [Cout] or undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions opt = {}) {
    require(input.rank() == 4, "conv2d: input must be [B,C,H,W], got ", shape_str(input.shape()));
    require(weight.rank() == 4, "conv2d: weight must be [Cout,Cin/g,k,k], got ",
            shape_str(weight.shape()));
    require(opt.stride >= 1, "conv2d: stride must be at least 1");
    require(opt.groups >= 1, "conv2d: groups must be at least 1");
    const std::size_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t Cout = weight.dim(0), k = weight.dim(2);
    const std::size_t G = opt.groups;
    require(weight.dim(3) == k, "conv2d: only square kernels are supported, got ",
            shape_str(weight.shape()));
    require(Cin % G == 0, "conv2d: input channels ", Cin, " not divisible by groups ", G);
    require(Cout % G == 0, "conv2d: output channels ", Cout, " not divisible by groups ", G);
    require(weight.dim(1) == Cin / G, "conv2d: weight expects ", weight.dim(1),
            " input channels per group but input provides ", Cin / G, " (Cin=", Cin, ", groups=", G, ")");
    const bool has_bias = bias.defined();
    if (has_bias) {
        require(bias.rank() == 1 && bias.dim(0) == Cout, "conv2d: bias shape ",
                shape_str(bias.shape()), " does not match Cout=", Cout);
    }

    detail::ConvGeom g;
    g.channels = Cin / G;
    g.H = H;
    g.W = W;
    g.k = k;
    g.stride = opt.stride;
    g.pad = opt.padding;
    g.Ho = detail::conv_out_size(H, k, opt.stride, opt.padding);
    g.Wo = detail::conv_out_size(W, k, opt.stride, opt.padding);
    const std::size_t Cog = Cout / G, K = g.rows(), P = g.cols();

    std::vector<T> out(B * Cout * P);
    std::vector<T> col(g.is_pointwise() ? 0 : K * P);
    const auto& xv = input.vec();
    const auto& wv = weight.vec();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t gi = 0; gi < G; ++gi) {
            const T* img = xv.data() + (b * Cin + gi * g.channels) * H * W;
            const T* colp = img;
            if (!g.is_pointwise()) {
                detail::im2col(img, g, col.data());
                colp = col.data();
            }
            detail::ConstMatMap<T> Wm(wv.data() + gi * Cog * K, Cog, K);
            detail::ConstMatMap<T> Cm(colp, K, P);
            detail::MatMap<T> Om(out.data() + (b * Cout + gi * Cog) * P, Cog, P);
            Om.noalias() = Wm * Cm;
        }
        if (has_bias) {
            const auto& bv = bias.vec();
            for (std::size_t c = 0; c < Cout; ++c) {
                T* row = out.data() + (b * Cout + c) * P;
                for (std::size_t p = 0; p < P; ++p) row[p] += bv[c];
            }
        }
    }

    std::vector<Tensor<T>> inputs{input, weight};
    if (has_bias) inputs.push_back(bias);
    return make_result<T>(
        "conv2d", Shape{B, Cout, g.Ho, g.Wo}, std::move(out), inputs,
        [input, weight, g, B, Cin, Cout, G, has_bias](std::span<const T> gout, GradSink<T>& sink) {
            auto gx = sink.grad(0);
            auto gw = sink.grad(1);
            const std::size_t Cog = Cout / G, K = g.rows(), P = g.cols();
            const auto& xv = input.vec();
            const auto& wv = weight.vec();
            std::vector<T> col(K * P), gcol(K * P);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t gi = 0; gi < G; ++gi) {
                    detail::ConstMatMap<T> Go(gout.data() + (b * Cout + gi * Cog) * P, Cog, P);
                    const T* img = xv.data() + (b * Cin + gi * g.channels) * g.H * g.W;
                    if (!gw.empty()) {
                        const T* colp = img;
                        if (!g.is_pointwise()) {
                            detail::im2col(img, g, col.data());
                            colp = col.data();
                        }
                        detail::ConstMatMap<T> Cm(colp, K, P);
                        detail::MatMap<T> Gw(gw.data() + gi * Cog * K, Cog, K);
                        Gw.noalias() += Go * Cm.transpose();
                    }
                    if (!gx.empty()) {
                        detail::ConstMatMap<T> Wm(wv.data() + gi * Cog * K, Cog, K);
                        T* gimg = gx.data() + (b * Cin + gi * g.channels) * g.H * g.W;
                        if (g.is_pointwise()) {
                            detail::MatMap<T> Gx(gimg, K, P);
                            Gx.noalias() += Wm.transpose() * Go;
                        } else {
                            detail::MatMap<T> Gc(gcol.data(), K, P);
                            Gc.noalias() = Wm.transpose() * Go;
                            detail::col2im(gcol.data(), g, gimg);
                        }
                    }
                }
            }
            if (has_bias) {
                auto gb = sink.grad(2);
                if (!gb.empty()) {
                    for (std::size_t b = 0; b < B; ++b) {
                        for (std::size_t c = 0; c < Cout; ++c) {
                            const T* row = gout.data() + (b * Cout + c) * P;
                            T acc = T(0);
                            for (std::size_t p = 0; p < P; ++p) acc += row[p];
                            gb[c] += acc;
                        }
                    }
                }
            }
        });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, Conv2dOptions opt = {}) {
    return conv2d(input, weight, Tensor<T>{}, opt);
}

} // namespace condiff
