#pragma once

#include <cstddef>
#include <vector>

#include "condiff/tensor/conv.hpp"
#include "condiff/tensor/ops.hpp"

namespace condiff::conditioning {

/// N learnable grouped kernels W_b, stored as one tensor [N, C, C/N, k, k].
/// Each base is applied with group count N, so a base holds C*(C/N)*k*k weights.
template <class T>
class KernelBases {
public:
    KernelBases() = default;

    explicit KernelBases(Tensor<T> bases) : bases_(std::move(bases)) {
        require(bases_.rank() == 5, "KernelBases: expected [N,C,C/N,k,k], got ", shape_str(bases_.shape()));
        const std::size_t N = bases_.dim(0), C = bases_.dim(1);
        require(N >= 1 && C % N == 0, "KernelBases: base count ", N, " does not divide channels ", C);
        require(bases_.dim(2) == C / N, "KernelBases: per-group input width ", bases_.dim(2),
                " must equal C/N = ", C / N);
        require(bases_.dim(3) == bases_.dim(4) && bases_.dim(3) % 2 == 1,
                "KernelBases: kernel must be square and odd, got ", shape_str(bases_.shape()));
    }

    std::size_t count() const { return bases_.dim(0); }
    std::size_t channels() const { return bases_.dim(1); }
    std::size_t group_width() const { return bases_.dim(2); }
    std::size_t kernel_size() const { return bases_.dim(3); }
    const Tensor<T>& tensor() const { return bases_; }

    /// Base b as a grouped conv weight [C, C/N, k, k] (detached copy).
    Tensor<T> base(std::size_t b) const {
        const std::size_t n = channels() * group_width() * kernel_size() * kernel_size();
        const auto& v = bases_.vec();
        return Tensor<T>(Shape{channels(), group_width(), kernel_size(), kernel_size()},
                         std::vector<T>(v.begin() + b * n, v.begin() + (b + 1) * n));
    }

private:
    Tensor<T> bases_;
};

/// Position-adaptive convolution: at pixel (i,j) the kernel is
/// F_ij = sum_b M[b,i,j] * W_b, applied with zero padding and stride 1.
///
/// Computed through linearity instead of materializing F_ij:
///   out(i,j) = sum_b M[b,i,j] * (W_b * x)(i,j).
/// Per channel group the N bases are stacked into one [N*C/N, C/N*k*k] matrix so a
/// single GEMM against the shared im2col buffer yields all N base responses.
///
/// x [B,C,H,W], M [B,N,H,W]; returns [B,C,H,W].
template <class T>
Tensor<T> akgm_dynamic_conv(const Tensor<T>& x, const KernelBases<T>& kb, const Tensor<T>& M) {
    require(x.rank() == 4, "akgm_dynamic_conv: x must be [B,C,H,W], got ", shape_str(x.shape()));
    require(M.rank() == 4, "akgm_dynamic_conv: fusion weights must be [B,N,H,W], got ",
            shape_str(M.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t N = kb.count(), k = kb.kernel_size();
    require(kb.channels() == C, "akgm_dynamic_conv: bases built for ", kb.channels(),
            " channels, input has ", C);
    require(C % N == 0, "akgm_dynamic_conv: base count ", N, " does not divide channels ", C);
    require(M.dim(0) == B && M.dim(1) == N && M.dim(2) == H && M.dim(3) == W,
            "akgm_dynamic_conv: fusion weights ", shape_str(M.shape()), " do not match [", B, ",", N,
            ",", H, ",", W, "]");

    const std::size_t Cg = C / N;
    detail::ConvGeom g;
    g.channels = Cg;
    g.H = H;
    g.W = W;
    g.k = k;
    g.stride = 1;
    g.pad = k / 2;
    g.Ho = H;
    g.Wo = W;
    const std::size_t K = g.rows(), P = g.cols();
    const std::size_t rows = N * Cg; // stacked rows per group

    const auto& wv = kb.tensor().vec();
    const auto& xv = x.vec();
    const auto& mv = M.vec();

    // stacked[g] row (b*Cg + o) = bases[b, g*Cg + o, :]
    auto stack_group = [&](std::size_t gi, std::vector<T>& dst) {
        for (std::size_t b = 0; b < N; ++b) {
            const T* src = wv.data() + (b * C + gi * Cg) * K;
            std::copy_n(src, Cg * K, dst.data() + b * Cg * K);
        }
    };

    std::vector<T> out(B * C * P, T(0));
    std::vector<T> responses(B * N * C * P); // Y, kept for the fusion-weight gradient
    std::vector<T> col(K * P), stacked(rows * K);
    for (std::size_t gi = 0; gi < N; ++gi) {
        stack_group(gi, stacked);
        detail::ConstMatMap<T> Wm(stacked.data(), rows, K);
        for (std::size_t b = 0; b < B; ++b) {
            detail::im2col(xv.data() + (b * C + gi * Cg) * P, g, col.data());
            T* Y = responses.data() + ((b * N + gi) * rows) * P;
            detail::ConstMatMap<T> Cm(col.data(), K, P);
            detail::MatMap<T> Ym(Y, rows, P);
            Ym.noalias() = Wm * Cm;
            for (std::size_t nb = 0; nb < N; ++nb) {
                const T* m = mv.data() + (b * N + nb) * P;
                for (std::size_t o = 0; o < Cg; ++o) {
                    T* dst = out.data() + (b * C + gi * Cg + o) * P;
                    const T* y = Y + (nb * Cg + o) * P;
                    for (std::size_t p = 0; p < P; ++p) dst[p] += m[p] * y[p];
                }
            }
        }
    }

    return make_result<T>(
        "akgm_dynamic_conv", x.shape(), std::move(out), {x, kb.tensor(), M},
        [x, bases = kb.tensor(), M, responses = std::move(responses), g, B, C, N, Cg,
         rows](std::span<const T> gout, GradSink<T>& sink) {
            auto gx = sink.grad(0);
            auto gw = sink.grad(1);
            auto gm = sink.grad(2);
            const std::size_t K = g.rows(), P = g.cols();
            const auto& wv = bases.vec();
            const auto& xv = x.vec();
            const auto& mv = M.vec();
            std::vector<T> col(K * P), gcol(K * P), gY(rows * P), stacked(rows * K), gstacked(rows * K);
            for (std::size_t gi = 0; gi < N; ++gi) {
                for (std::size_t b = 0; b < N; ++b) {
                    std::copy_n(wv.data() + (b * C + gi * Cg) * K, Cg * K, stacked.data() + b * Cg * K);
                }
                std::fill(gstacked.begin(), gstacked.end(), T(0));
                detail::ConstMatMap<T> Wm(stacked.data(), rows, K);
                for (std::size_t b = 0; b < B; ++b) {
                    const T* Y = responses.data() + ((b * N + gi) * rows) * P;
                    for (std::size_t nb = 0; nb < N; ++nb) {
                        const T* m = mv.data() + (b * N + nb) * P;
                        T* gmb = gm.empty() ? nullptr : gm.data() + (b * N + nb) * P;
                        for (std::size_t o = 0; o < Cg; ++o) {
                            const T* go = gout.data() + (b * C + gi * Cg + o) * P;
                            const T* y = Y + (nb * Cg + o) * P;
                            T* gy = gY.data() + (nb * Cg + o) * P;
                            for (std::size_t p = 0; p < P; ++p) gy[p] = m[p] * go[p];
                            if (gmb) {
                                for (std::size_t p = 0; p < P; ++p) gmb[p] += go[p] * y[p];
                            }
                        }
                    }
                    if (gw.empty() && gx.empty()) continue;
                    detail::ConstMatMap<T> Gy(gY.data(), rows, P);
                    const T* img = xv.data() + (b * C + gi * Cg) * P;
                    if (!gw.empty()) {
                        detail::im2col(img, g, col.data());
                        detail::ConstMatMap<T> Cm(col.data(), K, P);
                        detail::MatMap<T> Gw(gstacked.data(), rows, K);
                        Gw.noalias() += Gy * Cm.transpose();
                    }
                    if (!gx.empty()) {
                        detail::MatMap<T> Gc(gcol.data(), K, P);
                        Gc.noalias() = Wm.transpose() * Gy;
                        detail::col2im(gcol.data(), g, gx.data() + (b * C + gi * Cg) * P);
                    }
                }
                if (!gw.empty()) {
                    for (std::size_t b = 0; b < N; ++b) {
                        T* dst = gw.data() + (b * C + gi * Cg) * K;
                        const T* src = gstacked.data() + b * Cg * K;
                        for (std::size_t i = 0; i < Cg * K; ++i) dst[i] += src[i];
                    }
                }
            }
        });
}

} // namespace condiff::conditioning
