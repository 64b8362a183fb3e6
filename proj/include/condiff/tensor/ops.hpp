#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "condiff/tensor/tensor.hpp"

namespace condiff {

namespace detail {

/// Output shape plus per-input element strides (0 along broadcast dimensions).
struct BroadcastIndex {
    Shape out;
    std::vector<std::size_t> stride_a;
    std::vector<std::size_t> stride_b;
};

inline std::vector<std::size_t> aligned_strides(const Shape& in, std::size_t rank) {
    std::vector<std::size_t> strides(rank, 0);
    std::size_t running = 1;
    const std::size_t offset = rank - in.size();
    for (std::size_t d = in.size(); d-- > 0;) {
        strides[d + offset] = in[d] == 1 ? 0 : running;
        running *= in[d];
    }
    return strides;
}

/// Right-aligned broadcasting restricted to singleton dimensions.
inline BroadcastIndex broadcast_index(const Shape& a, const Shape& b, const char* op) {
    const std::size_t rank = std::max(a.size(), b.size());
    BroadcastIndex bi;
    bi.out.assign(rank, 1);
    for (std::size_t d = 0; d < rank; ++d) {
        const std::size_t da = d + a.size() >= rank ? a[d + a.size() - rank] : 1;
        const std::size_t db = d + b.size() >= rank ? b[d + b.size() - rank] : 1;
        if (da != db && da != 1 && db != 1) {
            fail_precondition(op, ": shapes ", shape_str(a), " and ", shape_str(b),
                              " are not broadcast-compatible at dimension ", d);
        }
        bi.out[d] = std::max(da, db);
    }
    bi.stride_a = aligned_strides(a, rank);
    bi.stride_b = aligned_strides(b, rank);
    return bi;
}

template <class Fn>
void broadcast_loop(const BroadcastIndex& bi, Fn&& fn) {
    const std::size_t rank = bi.out.size();
    if (rank == 0) {
        fn(std::size_t{0}, std::size_t{0}, std::size_t{0});
        return;
    }
    const std::size_t inner = bi.out[rank - 1];
    const std::size_t sa = bi.stride_a[rank - 1];
    const std::size_t sb = bi.stride_b[rank - 1];
    const std::size_t total = numel(bi.out);
    if (inner == 0 || total == 0) return;
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t o = 0; o < total; o += inner) {
        std::size_t ia = 0, ib = 0;
        for (std::size_t d = 0; d + 1 < rank; ++d) {
            ia += idx[d] * bi.stride_a[d];
            ib += idx[d] * bi.stride_b[d];
        }
        for (std::size_t j = 0; j < inner; ++j) fn(o + j, ia + j * sa, ib + j * sb);
        for (std::size_t d = rank - 1; d-- > 0;) {
            if (++idx[d] < bi.out[d]) break;
            idx[d] = 0;
        }
    }
}

template <class T, class F, class DA, class DB>
Tensor<T> broadcast_binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, F f, DA dfa,
                           DB dfb) {
    auto bi = broadcast_index(a.shape(), b.shape(), op);
    std::vector<T> out(numel(bi.out));
    const auto& av = a.vec();
    const auto& bv = b.vec();
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
    } else {
        broadcast_loop(bi, [&](std::size_t o, std::size_t ia, std::size_t ib) {
            out[o] = f(av[ia], bv[ib]);
        });
    }
    Shape shape = bi.out;
    return make_result<T>(op, std::move(shape), std::move(out), {a, b},
                          [a, b, bi, dfa, dfb](std::span<const T> g, GradSink<T>& sink) {
                              auto ga = sink.grad(0);
                              auto gb = sink.grad(1);
                              const auto& av = a.vec();
                              const auto& bv = b.vec();
                              broadcast_loop(bi, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                                  if (!ga.empty()) ga[ia] += g[o] * dfa(av[ia], bv[ib]);
                                  if (!gb.empty()) gb[ib] += g[o] * dfb(av[ia], bv[ib]);
                              });
                          });
}

template <class T, class F, class DF>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, DF df) {
    const auto& xv = x.vec();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    return make_result<T>(op, x.shape(), std::move(out), {x},
                          [x, df](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              const auto& xv = x.vec();
                              for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * df(xv[i]);
                          });
}

} // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::broadcast_binary<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
        [](T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::broadcast_binary<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
        [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::broadcast_binary<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
        [](T x, T) { return x; });
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    return detail::unary<T>("scale", x, [s](T v) { return s * v; }, [s](T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
    return detail::unary<T>("add_scalar", x, [s](T v) { return v + s; }, [](T) { return T(1); });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
    return detail::unary<T>("square", x, [](T v) { return v * v; }, [](T v) { return T(2) * v; });
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
    return detail::unary<T>(
        "abs", x, [](T v) { return std::abs(v); },
        [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = T(0);
    for (T v : x.vec()) acc += v;
    const std::size_t n = x.size();
    return make_result<T>("sum", Shape{}, std::vector<T>{acc}, {x},
                          [n](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
                          });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    require(x.size() > 0, "mean: empty tensor");
    T acc = T(0);
    for (T v : x.vec()) acc += v;
    const std::size_t n = x.size();
    const T inv = T(1) / static_cast<T>(n);
    return make_result<T>("mean", Shape{}, std::vector<T>{acc * inv}, {x},
                          [n, inv](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              for (std::size_t i = 0; i < n; ++i) gx[i] += g[0] * inv;
                          });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    require(numel(shape) == x.size(), "reshape: cannot view ", shape_str(x.shape()), " as ",
            shape_str(shape));
    const std::size_t n = x.size();
    return make_result<T>("reshape", std::move(shape), x.vec(), {x},
                          [n](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
                          });
}

namespace detail {

/// (outer, axis, inner) factorization of a shape around `axis`.
struct AxisSplit {
    std::size_t outer = 1, axis = 1, inner = 1;
};

inline AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t d = 0; d < axis; ++d) r.outer *= s[d];
    r.axis = s[axis];
    for (std::size_t d = axis + 1; d < s.size(); ++d) r.inner *= s[d];
    return r;
}

} // namespace detail

/// Concatenation along `axis`; all other dimensions must agree.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    require(!parts.empty(), "concat: no inputs");
    const Shape& ref = parts[0].shape();
    require(axis < ref.size(), "concat: axis ", axis, " out of range for rank ", ref.size());
    Shape out_shape = ref;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        require(s.size() == ref.size(), "concat: rank mismatch ", shape_str(s), " vs ",
                shape_str(ref));
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (d != axis && s[d] != ref[d]) {
                fail_precondition("concat: shape ", shape_str(s), " incompatible with ",
                                  shape_str(ref), " at dimension ", d);
            }
        }
        out_shape[axis] += s[axis];
    }
    const auto split = detail::split_at(out_shape, axis);
    std::vector<T> out(numel(out_shape));
    std::vector<std::size_t> widths;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(axis) * split.inner;
        widths.push_back(w);
        const auto& pv = p.vec();
        for (std::size_t o = 0; o < split.outer; ++o) {
            std::copy_n(pv.begin() + o * w, w, out.begin() + o * split.axis * split.inner + offset);
        }
        offset += w;
    }
    const std::size_t row = split.axis * split.inner;
    const std::size_t outer = split.outer;
    return make_result<T>("concat", std::move(out_shape), std::move(out), parts,
                          [widths, row, outer](std::span<const T> g, GradSink<T>& sink) {
                              std::size_t offset = 0;
                              for (std::size_t k = 0; k < widths.size(); ++k) {
                                  auto gp = sink.grad(k);
                                  const std::size_t w = widths[k];
                                  if (!gp.empty()) {
                                      for (std::size_t o = 0; o < outer; ++o) {
                                          for (std::size_t j = 0; j < w; ++j) {
                                              gp[o * w + j] += g[o * row + offset + j];
                                          }
                                      }
                                  }
                                  offset += w;
                              }
                          });
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    for (const auto& p : parts) {
        require(p.rank() == 4, "concat_channels: expected rank-4 tensors, got ", shape_str(p.shape()));
    }
    return concat(parts, 1);
}

/// Elements [begin, end) along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
    require(axis < x.rank(), "slice: axis ", axis, " out of range for ", shape_str(x.shape()));
    require(begin < end && end <= x.dim(axis), "slice: range [", begin, ",", end,
            ") invalid for dimension of size ", x.dim(axis));
    const auto split = detail::split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = end - begin;
    const std::size_t w = (end - begin) * split.inner;
    const std::size_t row = split.axis * split.inner;
    const std::size_t off = begin * split.inner;
    std::vector<T> out(split.outer * w);
    const auto& xv = x.vec();
    for (std::size_t o = 0; o < split.outer; ++o) {
        std::copy_n(xv.begin() + o * row + off, w, out.begin() + o * w);
    }
    const std::size_t outer = split.outer;
    return make_result<T>("slice", std::move(out_shape), std::move(out), {x},
                          [outer, w, row, off](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              for (std::size_t o = 0; o < outer; ++o) {
                                  for (std::size_t j = 0; j < w; ++j) gx[o * row + off + j] += g[o * w + j];
                              }
                          });
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end) {
    return slice(x, 1, begin, end);
}

/// Spatial window [top, top+height) x [left, left+width) of a [B,C,H,W] tensor.
template <class T>
Tensor<T> crop(const Tensor<T>& x, std::size_t top, std::size_t left, std::size_t height,
               std::size_t width) {
    require(x.rank() == 4, "crop: expected [B,C,H,W], got ", shape_str(x.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(height > 0 && width > 0 && top + height <= H && left + width <= W, "crop: window (",
            top, ",", left, ",", height, ",", width, ") exceeds ", H, "x", W);
    std::vector<T> out(B * C * height * width);
    const auto& xv = x.vec();
    for (std::size_t p = 0; p < B * C; ++p) {
        for (std::size_t i = 0; i < height; ++i) {
            std::copy_n(xv.begin() + (p * H + top + i) * W + left, width,
                        out.begin() + (p * height + i) * width);
        }
    }
    return make_result<T>(
        "crop", Shape{B, C, height, width}, std::move(out), {x},
        [B, C, H, W, top, left, height, width](std::span<const T> g, GradSink<T>& sink) {
            auto gx = sink.grad(0);
            for (std::size_t p = 0; p < B * C; ++p) {
                for (std::size_t i = 0; i < height; ++i) {
                    for (std::size_t j = 0; j < width; ++j) {
                        gx[(p * H + top + i) * W + left + j] += g[(p * height + i) * width + j];
                    }
                }
            }
        });
}

/// Zero padding of the two spatial dimensions.
template <class T>
Tensor<T> pad(const Tensor<T>& x, std::size_t top, std::size_t bottom, std::size_t left,
              std::size_t right) {
    require(x.rank() == 4, "pad: expected [B,C,H,W], got ", shape_str(x.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Ho = H + top + bottom, Wo = W + left + right;
    std::vector<T> out(B * C * Ho * Wo, T(0));
    const auto& xv = x.vec();
    for (std::size_t p = 0; p < B * C; ++p) {
        for (std::size_t i = 0; i < H; ++i) {
            std::copy_n(xv.begin() + (p * H + i) * W, W, out.begin() + (p * Ho + top + i) * Wo + left);
        }
    }
    return make_result<T>("pad", Shape{B, C, Ho, Wo}, std::move(out), {x},
                          [B, C, H, W, Ho, Wo, top, left](std::span<const T> g, GradSink<T>& sink) {
                              auto gx = sink.grad(0);
                              for (std::size_t p = 0; p < B * C; ++p) {
                                  for (std::size_t i = 0; i < H; ++i) {
                                      for (std::size_t j = 0; j < W; ++j) {
                                          gx[(p * H + i) * W + j] += g[(p * Ho + top + i) * Wo + left + j];
                                      }
                                  }
                              }
                          });
}

} // namespace condiff
