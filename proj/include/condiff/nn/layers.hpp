#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "condiff/tensor/conv.hpp"
#include "condiff/tensor/ops.hpp"

namespace condiff::nn {

template <class T>
T sigmoid_scalar(T v) {
    return T(1) / (T(1) + std::exp(-v));
}

template <class T>
Tensor<T> swish(const Tensor<T>& x) {
    return detail::unary<T>(
        "swish", x, [](T v) { return v * sigmoid_scalar(v); },
        [](T v) {
            const T s = sigmoid_scalar(v);
            return s + v * s * (T(1) - s);
        });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary<T>(
        "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary<T>(
        "sigmoid", x, [](T v) { return sigmoid_scalar(v); },
        [](T v) {
            const T s = sigmoid_scalar(v);
            return s * (T(1) - s);
        });
}

/// Softmax across the channel dimension at every (batch, pixel).
template <class T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
    require(x.rank() == 4, "softmax_channels: expected [B,C,H,W], got ", shape_str(x.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
    const auto& xv = x.vec();
    std::vector<T> out(xv.size());
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t p = 0; p < P; ++p) {
            const std::size_t base = b * C * P + p;
            T mx = xv[base];
            for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xv[base + c * P]);
            T total = T(0);
            for (std::size_t c = 0; c < C; ++c) {
                out[base + c * P] = std::exp(xv[base + c * P] - mx);
                total += out[base + c * P];
            }
            for (std::size_t c = 0; c < C; ++c) out[base + c * P] /= total;
        }
    }
    std::vector<T> saved = out;
    return make_result<T>("softmax_channels", x.shape(), std::move(out), {x},
                          [y = std::move(saved), B, C, P](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              for (std::size_t b = 0; b < B; ++b) {
                                  for (std::size_t p = 0; p < P; ++p) {
                                      const std::size_t base = b * C * P + p;
                                      T dot = T(0);
                                      for (std::size_t c = 0; c < C; ++c) dot += g[base + c * P] * y[base + c * P];
                                      for (std::size_t c = 0; c < C; ++c) {
                                          gx[base + c * P] += y[base + c * P] * (g[base + c * P] - dot);
                                      }
                                  }
                              }
                          });
}

/// Splits channels into halves [a; b] and returns a * b.
template <class T>
Tensor<T> simple_gate(const Tensor<T>& x) {
    require(x.rank() == 4, "simple_gate: expected [B,2C,H,W], got ", shape_str(x.shape()));
    require(x.dim(1) % 2 == 0, "simple_gate: channel count ", x.dim(1), " is odd");
    const std::size_t B = x.dim(0), C = x.dim(1) / 2, P = x.dim(2) * x.dim(3);
    std::vector<T> out(B * C * P);
    const auto& xv = x.vec();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            const T* lo = xv.data() + (b * 2 * C + c) * P;
            const T* hi = lo + C * P;
            T* o = out.data() + (b * C + c) * P;
            for (std::size_t p = 0; p < P; ++p) o[p] = lo[p] * hi[p];
        }
    }
    return make_result<T>("simple_gate", Shape{B, C, x.dim(2), x.dim(3)}, std::move(out), {x},
                          [x, B, C, P](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              const auto& xv = x.vec();
                              for (std::size_t b = 0; b < B; ++b) {
                                  for (std::size_t c = 0; c < C; ++c) {
                                      const std::size_t lo = (b * 2 * C + c) * P, hi = lo + C * P;
                                      const T* go = g.data() + (b * C + c) * P;
                                      for (std::size_t p = 0; p < P; ++p) {
                                          gx[lo + p] += go[p] * xv[hi + p];
                                          gx[hi + p] += go[p] * xv[lo + p];
                                      }
                                  }
                              }
                          });
}

/// Normalizes across channels independently at every (batch, pixel), then applies
/// per-channel scale and shift.
template <class T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& scale, const Tensor<T>& shift,
                              T eps = T(1e-6)) {
    require(x.rank() == 4, "layer_norm_channels: expected [B,C,H,W], got ", shape_str(x.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
    require(C >= 1, "layer_norm_channels: zero channels");
    require(eps >= T(0), "layer_norm_channels: eps must be nonnegative");
    require(scale.size() == C && shift.size() == C, "layer_norm_channels: scale/shift must have ",
            C, " entries, got ", scale.size(), "/", shift.size());

    const auto& xv = x.vec();
    const auto& sv = scale.vec();
    const auto& hv = shift.vec();
    std::vector<T> xhat(xv.size()), out(xv.size()), rstd(B * P);
    std::vector<T> mu(P), var(P);
    const T invC = T(1) / static_cast<T>(C);
    for (std::size_t b = 0; b < B; ++b) {
        const T* xb = xv.data() + b * C * P;
        std::fill(mu.begin(), mu.end(), T(0));
        std::fill(var.begin(), var.end(), T(0));
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t p = 0; p < P; ++p) mu[p] += xb[c * P + p];
        }
        for (std::size_t p = 0; p < P; ++p) mu[p] *= invC;
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t p = 0; p < P; ++p) {
                const T d = xb[c * P + p] - mu[p];
                var[p] += d * d;
            }
        }
        T* rs = rstd.data() + b * P;
        for (std::size_t p = 0; p < P; ++p) rs[p] = T(1) / std::sqrt(var[p] * invC + eps);
        for (std::size_t c = 0; c < C; ++c) {
            T* xh = xhat.data() + (b * C + c) * P;
            T* o = out.data() + (b * C + c) * P;
            for (std::size_t p = 0; p < P; ++p) {
                xh[p] = (xb[c * P + p] - mu[p]) * rs[p];
                o[p] = xh[p] * sv[c] + hv[c];
            }
        }
    }
    return make_result<T>(
        "layer_norm_channels", x.shape(), std::move(out), {x, scale, shift},
        [xhat = std::move(xhat), rstd = std::move(rstd), scale, B, C, P](std::span<const T> g,
                                                                       GradSink<T>& sink) {
            auto gx = sink.grad(0);
            auto gs = sink.grad(1);
            auto gh = sink.grad(2);
            const auto& sv = scale.vec();
            const T invC = T(1) / static_cast<T>(C);
            std::vector<T> m1(P), m2(P);
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t base = b * C * P;
                if (!gs.empty() || !gh.empty()) {
                    for (std::size_t c = 0; c < C; ++c) {
                        T as = T(0), ah = T(0);
                        for (std::size_t p = 0; p < P; ++p) {
                            const std::size_t i = base + c * P + p;
                            as += g[i] * xhat[i];
                            ah += g[i];
                        }
                        if (!gs.empty()) gs[c] += as;
                        if (!gh.empty()) gh[c] += ah;
                    }
                }
                if (gx.empty()) continue;
                std::fill(m1.begin(), m1.end(), T(0));
                std::fill(m2.begin(), m2.end(), T(0));
                for (std::size_t c = 0; c < C; ++c) {
                    for (std::size_t p = 0; p < P; ++p) {
                        const std::size_t i = base + c * P + p;
                        const T gxh = g[i] * sv[c];
                        m1[p] += gxh;
                        m2[p] += gxh * xhat[i];
                    }
                }
                const T* rs = rstd.data() + b * P;
                for (std::size_t c = 0; c < C; ++c) {
                    for (std::size_t p = 0; p < P; ++p) {
                        const std::size_t i = base + c * P + p;
                        const T gxh = g[i] * sv[c];
                        gx[i] += rs[p] * (gxh - m1[p] * invC - xhat[i] * m2[p] * invC);
                    }
                }
            }
        });
}

/// Statistics per (batch, group) over the group's channels and all pixels.
template <class T>
Tensor<T> group_norm_channels(const Tensor<T>& x, std::size_t num_groups, const Tensor<T>& scale,
                              const Tensor<T>& shift, T eps = T(1e-6)) {
    require(x.rank() == 4, "group_norm_channels: expected [B,C,H,W], got ", shape_str(x.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
    require(num_groups >= 1 && C % num_groups == 0, "group_norm_channels: ", C,
            " channels not divisible into ", num_groups, " groups");
    require(scale.size() == C && shift.size() == C, "group_norm_channels: scale/shift must have ",
            C, " entries");
    const std::size_t Cg = C / num_groups, n = Cg * P;
    const auto& xv = x.vec();
    const auto& sv = scale.vec();
    const auto& hv = shift.vec();
    std::vector<T> xhat(xv.size()), out(xv.size()), rstd(B * num_groups);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t gi = 0; gi < num_groups; ++gi) {
            const std::size_t base = (b * C + gi * Cg) * P;
            T m = T(0);
            for (std::size_t i = 0; i < n; ++i) m += xv[base + i];
            m /= static_cast<T>(n);
            T v = T(0);
            for (std::size_t i = 0; i < n; ++i) {
                const T d = xv[base + i] - m;
                v += d * d;
            }
            const T rs = T(1) / std::sqrt(v / static_cast<T>(n) + eps);
            rstd[b * num_groups + gi] = rs;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t c = gi * Cg + i / P;
                xhat[base + i] = (xv[base + i] - m) * rs;
                out[base + i] = xhat[base + i] * sv[c] + hv[c];
            }
        }
    }
    return make_result<T>(
        "group_norm_channels", x.shape(), std::move(out), {x, scale, shift},
        [xhat = std::move(xhat), rstd = std::move(rstd), scale, B, C, P, num_groups, Cg,
         n](std::span<const T> g, GradSink<T>& sink) {
            auto gx = sink.grad(0);
            auto gs = sink.grad(1);
            auto gh = sink.grad(2);
            const auto& sv = scale.vec();
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t gi = 0; gi < num_groups; ++gi) {
                    const std::size_t base = (b * C + gi * Cg) * P;
                    T m1 = T(0), m2 = T(0);
                    for (std::size_t i = 0; i < n; ++i) {
                        const std::size_t c = gi * Cg + i / P;
                        const T gxh = g[base + i] * sv[c];
                        m1 += gxh;
                        m2 += gxh * xhat[base + i];
                        if (!gs.empty()) gs[c] += g[base + i] * xhat[base + i];
                        if (!gh.empty()) gh[c] += g[base + i];
                    }
                    if (gx.empty()) continue;
                    m1 /= static_cast<T>(n);
                    m2 /= static_cast<T>(n);
                    const T rs = rstd[b * num_groups + gi];
                    for (std::size_t i = 0; i < n; ++i) {
                        const std::size_t c = gi * Cg + i / P;
                        const T gxh = g[base + i] * sv[c];
                        gx[base + i] += rs * (gxh - m1 - xhat[base + i] * m2);
                    }
                }
            }
        });
}

/// Affine map over the trailing dimension: x [..., Din], weight [Dout, Din], bias [Dout].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require(x.rank() >= 1, "linear: input must have at least one dimension");
    require(weight.rank() == 2, "linear: weight must be [Dout, Din], got ", shape_str(weight.shape()));
    const std::size_t Din = x.shape().back(), Dout = weight.dim(0);
    require(weight.dim(1) == Din, "linear: input width ", Din, " does not match weight ",
            shape_str(weight.shape()));
    require(bias.defined() && bias.size() == Dout, "linear: bias must have ", Dout, " entries");
    const std::size_t rows = x.size() / Din;
    Shape out_shape = x.shape();
    out_shape.back() = Dout;
    std::vector<T> out(rows * Dout);
    {
        detail::ConstMatMap<T> X(x.vec().data(), rows, Din);
        detail::ConstMatMap<T> Wm(weight.vec().data(), Dout, Din);
        detail::MatMap<T> Y(out.data(), rows, Dout);
        Y.noalias() = X * Wm.transpose();
        const auto& bv = bias.vec();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < Dout; ++o) out[r * Dout + o] += bv[o];
        }
    }
    return make_result<T>("linear", std::move(out_shape), std::move(out), {x, weight, bias},
                          [x, weight, rows, Din, Dout](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              auto gw = sink.grad(1);
                              auto gb = sink.grad(2);
                              detail::ConstMatMap<T> G(g.data(), rows, Dout);
                              if (!gx.empty()) {
                                  detail::ConstMatMap<T> Wm(weight.vec().data(), Dout, Din);
                                  detail::MatMap<T> Gx(gx.data(), rows, Din);
                                  Gx.noalias() += G * Wm;
                              }
                              if (!gw.empty()) {
                                  detail::ConstMatMap<T> X(x.vec().data(), rows, Din);
                                  detail::MatMap<T> Gw(gw.data(), Dout, Din);
                                  Gw.noalias() += G.transpose() * X;
                              }
                              if (!gb.empty()) {
                                  for (std::size_t r = 0; r < rows; ++r) {
                                      for (std::size_t o = 0; o < Dout; ++o) gb[o] += g[r * Dout + o];
                                  }
                              }
                          });
}

template <class T>
Tensor<T> nearest_upsample2x(const Tensor<T>& x) {
    require(x.rank() == 4, "nearest_upsample2x: expected [B,C,H,W], got ", shape_str(x.shape()));
    const std::size_t BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Ho = 2 * H, Wo = 2 * W;
    std::vector<T> out(BC * Ho * Wo);
    const auto& xv = x.vec();
    for (std::size_t p = 0; p < BC; ++p) {
        for (std::size_t i = 0; i < Ho; ++i) {
            const T* src = xv.data() + (p * H + i / 2) * W;
            T* dst = out.data() + (p * Ho + i) * Wo;
            for (std::size_t j = 0; j < Wo; ++j) dst[j] = src[j / 2];
        }
    }
    return make_result<T>("nearest_upsample2x", Shape{x.dim(0), x.dim(1), Ho, Wo}, std::move(out), {x},
                          [BC, H, W, Ho, Wo](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              for (std::size_t p = 0; p < BC; ++p) {
                                  for (std::size_t i = 0; i < Ho; ++i) {
                                      for (std::size_t j = 0; j < Wo; ++j) {
                                          gx[(p * H + i / 2) * W + j / 2] += g[(p * Ho + i) * Wo + j];
                                      }
                                  }
                              }
                          });
}

/// Means over non-overlapping fh x fw windows.
template <class T>
Tensor<T> avg_pool(const Tensor<T>& x, std::size_t fh, std::size_t fw) {
    require(x.rank() == 4, "avg_pool: expected [B,C,H,W], got ", shape_str(x.shape()));
    const std::size_t BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    require(fh >= 1 && fw >= 1 && H % fh == 0 && W % fw == 0, "avg_pool: factors (", fh, ",", fw,
            ") do not divide spatial dims ", H, "x", W);
    if (fh == 1 && fw == 1) return x;
    const std::size_t Ho = H / fh, Wo = W / fw;
    const T inv = T(1) / static_cast<T>(fh * fw);
    std::vector<T> out(BC * Ho * Wo, T(0));
    const auto& xv = x.vec();
    for (std::size_t p = 0; p < BC; ++p) {
        for (std::size_t i = 0; i < H; ++i) {
            const T* src = xv.data() + (p * H + i) * W;
            T* dst = out.data() + (p * Ho + i / fh) * Wo;
            for (std::size_t j = 0; j < W; ++j) dst[j / fw] += src[j];
        }
    }
    for (auto& v : out) v *= inv;
    return make_result<T>("avg_pool", Shape{x.dim(0), x.dim(1), Ho, Wo}, std::move(out), {x},
                          [BC, H, W, Ho, Wo, fh, fw, inv](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              for (std::size_t p = 0; p < BC; ++p) {
                                  for (std::size_t i = 0; i < H; ++i) {
                                      for (std::size_t j = 0; j < W; ++j) {
                                          gx[(p * H + i) * W + j] += g[(p * Ho + i / fh) * Wo + j / fw] * inv;
                                      }
                                  }
                              }
                          });
}

template <class T>
Tensor<T> avg_downsample(const Tensor<T>& x, std::size_t factor) {
    return avg_pool(x, factor, factor);
}

/// [B,C,H,W] -> [B,C,1,1]
template <class T>
Tensor<T> spatial_mean(const Tensor<T>& x) {
    require(x.rank() == 4, "spatial_mean: expected [B,C,H,W], got ", shape_str(x.shape()));
    return avg_pool(x, x.dim(2), x.dim(3));
}

} // namespace condiff::nn
