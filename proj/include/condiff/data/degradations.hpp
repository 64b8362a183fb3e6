#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "condiff/core/rng.hpp"
#include "condiff/tensor/tensor.hpp"

namespace condiff::data {

enum class DegradationKind { gaussian_lowlight, blur, jpeg_proxy };
enum class BlurKernel { box, motion_h, motion_v };

inline std::string to_string(DegradationKind k) {
    switch (k) {
    case DegradationKind::gaussian_lowlight: return "gaussian_lowlight";
    case DegradationKind::blur: return "blur";
    case DegradationKind::jpeg_proxy: return "jpeg_proxy";
    }
    return "?";
}

inline std::string to_string(BlurKernel k) {
    switch (k) {
    case BlurKernel::box: return "box";
    case BlurKernel::motion_h: return "motion_h";
    case BlurKernel::motion_v: return "motion_v";
    }
    return "?";
}

inline DegradationKind parse_degradation_kind(const std::string& s) {
    for (auto k : {DegradationKind::gaussian_lowlight, DegradationKind::blur, DegradationKind::jpeg_proxy}) {
        if (to_string(k) == s) return k;
    }
    fail_precondition("unknown degradation kind '", s, "'");
}

inline BlurKernel parse_blur_kernel(const std::string& s) {
    for (auto k : {BlurKernel::box, BlurKernel::motion_h, BlurKernel::motion_v}) {
        if (to_string(k) == s) return k;
    }
    fail_precondition("unknown blur kernel '", s, "'");
}

/// x = clip(clip(y / gain + sigma * n) * gain): darken, add read noise, amplify.
inline Tensor<float> degrade_gaussian_lowlight(const Tensor<float>& y, double sigma, double gain, Rng& rng) {
    require(sigma >= 0.0 && sigma <= 0.5, "degrade_gaussian_lowlight: sigma ", sigma, " outside [0, 0.5]");
    require(gain >= 1.0 && gain <= 300.0, "degrade_gaussian_lowlight: gain ", gain, " outside [1, 300]");
    const auto& v = y.vec();
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double dark = static_cast<double>(v[i]) / gain + sigma * rng.normal();
        out[i] = static_cast<float>(std::clamp(std::clamp(dark, 0.0, 1.0) * gain, 0.0, 1.0));
    }
    return Tensor<float>(y.shape(), std::move(out));
}

namespace detail {

inline std::size_t reflect(long i, long n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return static_cast<std::size_t>(i);
}

} // namespace detail

/// Normalized blur with reflective boundary. box: (2r+1)^2, motion_h: 1 x (2r+1),
/// motion_v: (2r+1) x 1. Radius 0 is the identity.
inline Tensor<float> degrade_blur(const Tensor<float>& y, BlurKernel kernel, std::size_t radius) {
    require(y.rank() == 4, "degrade_blur: expected [B,C,H,W], got ", shape_str(y.shape()));
    if (radius == 0) return Tensor<float>(y.shape(), y.vec());
    const long r = static_cast<long>(radius);
    const long ry = kernel == BlurKernel::motion_h ? 0 : r;
    const long rx = kernel == BlurKernel::motion_v ? 0 : r;
    const double norm = 1.0 / static_cast<double>((2 * ry + 1) * (2 * rx + 1));
    const std::size_t BC = y.dim(0) * y.dim(1), H = y.dim(2), W = y.dim(3);
    const auto& v = y.vec();
    std::vector<float> out(v.size());
    for (std::size_t p = 0; p < BC; ++p) {
        const float* img = v.data() + p * H * W;
        for (long i = 0; i < static_cast<long>(H); ++i) {
            for (long j = 0; j < static_cast<long>(W); ++j) {
                double acc = 0.0;
                for (long di = -ry; di <= ry; ++di) {
                    const std::size_t ii = detail::reflect(i + di, static_cast<long>(H));
                    for (long dj = -rx; dj <= rx; ++dj) {
                        acc += img[ii * W + detail::reflect(j + dj, static_cast<long>(W))];
                    }
                }
                out[p * H * W + static_cast<std::size_t>(i) * W + static_cast<std::size_t>(j)] =
                    static_cast<float>(std::clamp(acc * norm, 0.0, 1.0));
            }
        }
    }
    return Tensor<float>(y.shape(), std::move(out));
}

/// Standard JPEG luminance quantization table (row-major 8x8).
inline constexpr std::array<int, 64> kLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,  14, 13, 16, 24,  40, 57,
    69, 56, 14, 17, 22,  29,  51,  87,  80, 62, 18, 22, 37,  56,  68,  109, 103, 77, 24, 35, 55, 64,
    81, 104, 113, 92, 49, 64, 78,  87,  103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

/// Table scaled by quality with the usual rule (5000/q below 50, 200 - 2q above), clamped to [1, 255].
inline std::array<int, 64> quantization_table(int quality) {
    require(quality >= 1 && quality <= 100, "quantization_table: quality ", quality, " outside [1, 100]");
    const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<int, 64> q{};
    for (std::size_t i = 0; i < 64; ++i) q[i] = std::clamp((kLuminanceTable[i] * s + 50) / 100, 1, 255);
    return q;
}

namespace detail {

/// Orthonormal 8-point DCT-II basis: D[u][x].
inline const std::array<double, 64>& dct_basis() {
    static const std::array<double, 64> d = [] {
        std::array<double, 64> m{};
        for (int u = 0; u < 8; ++u) {
            const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x) m[u * 8 + x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
        }
        return m;
    }();
    return d;
}

} // namespace detail

/// Per-channel 8x8 block DCT, rounding to multiples of the quality-scaled table,
/// inverse DCT. Works in 0..255 units shifted by -128. Sizes that are not multiples
/// of 8 are reflect-padded, processed, and cropped back.
inline Tensor<float> degrade_jpeg_proxy(const Tensor<float>& y, int quality) {
    require(y.rank() == 4, "degrade_jpeg_proxy: expected [B,C,H,W], got ", shape_str(y.shape()));
    const auto q = quantization_table(quality);
    const auto& D = detail::dct_basis();
    const std::size_t BC = y.dim(0) * y.dim(1), H = y.dim(2), W = y.dim(3);
    const std::size_t Hp = (H + 7) / 8 * 8, Wp = (W + 7) / 8 * 8;
    const auto& v = y.vec();
    std::vector<float> out(v.size());
    std::vector<double> plane(Hp * Wp);
    for (std::size_t p = 0; p < BC; ++p) {
        const float* img = v.data() + p * H * W;
        for (std::size_t i = 0; i < Hp; ++i) {
            for (std::size_t j = 0; j < Wp; ++j) {
                const std::size_t ii = detail::reflect(static_cast<long>(i), static_cast<long>(H));
                const std::size_t jj = detail::reflect(static_cast<long>(j), static_cast<long>(W));
                plane[i * Wp + j] = static_cast<double>(img[ii * W + jj]) * 255.0 - 128.0;
            }
        }
        double blk[64], tmp[64], coef[64];
        for (std::size_t bi = 0; bi < Hp; bi += 8) {
            for (std::size_t bj = 0; bj < Wp; bj += 8) {
                for (int i = 0; i < 8; ++i) {
                    for (int j = 0; j < 8; ++j) blk[i * 8 + j] = plane[(bi + i) * Wp + bj + j];
                }
                // rows then columns
                for (int i = 0; i < 8; ++i) {
                    for (int u = 0; u < 8; ++u) {
                        double s = 0;
                        for (int x = 0; x < 8; ++x) s += D[u * 8 + x] * blk[i * 8 + x];
                        tmp[i * 8 + u] = s;
                    }
                }
                for (int u = 0; u < 8; ++u) {
                    for (int vv = 0; vv < 8; ++vv) {
                        double s = 0;
                        for (int x = 0; x < 8; ++x) s += D[vv * 8 + x] * tmp[x * 8 + u];
                        const double qs = q[vv * 8 + u];
                        coef[vv * 8 + u] = std::round(s / qs) * qs;
                    }
                }
                for (int vv = 0; vv < 8; ++vv) {
                    for (int x = 0; x < 8; ++x) {
                        double s = 0;
                        for (int u = 0; u < 8; ++u) s += D[u * 8 + x] * coef[vv * 8 + u];
                        tmp[vv * 8 + x] = s;
                    }
                }
                for (int x = 0; x < 8; ++x) {
                    for (int yy = 0; yy < 8; ++yy) {
                        double s = 0;
                        for (int vv = 0; vv < 8; ++vv) s += D[vv * 8 + yy] * tmp[vv * 8 + x];
                        blk[yy * 8 + x] = s;
                    }
                }
                for (int i = 0; i < 8; ++i) {
                    for (int j = 0; j < 8; ++j) plane[(bi + i) * Wp + bj + j] = blk[i * 8 + j];
                }
            }
        }
        for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
                out[p * H * W + i * W + j] =
                    static_cast<float>(std::clamp((plane[i * Wp + j] + 128.0) / 255.0, 0.0, 1.0));
            }
        }
    }
    return Tensor<float>(y.shape(), std::move(out));
}

inline constexpr std::size_t kEncodingWidth = 8;

/// A degradation with its parameters.
///   gaussian_lowlight: p0 = sigma, p1 = gain
///   blur:              kernel, radius
///   jpeg_proxy:        quality
struct DegradationSpec {
    DegradationKind kind = DegradationKind::gaussian_lowlight;
    double sigma = 0.1;
    double gain = 1.0;
    BlurKernel kernel = BlurKernel::box;
    std::size_t radius = 1;
    int quality = 10;

    static DegradationSpec lowlight(double sigma, double gain) {
        DegradationSpec s;
        s.kind = DegradationKind::gaussian_lowlight;
        s.sigma = sigma;
        s.gain = gain;
        return s;
    }
    static DegradationSpec blur(BlurKernel k, std::size_t radius) {
        DegradationSpec s;
        s.kind = DegradationKind::blur;
        s.kernel = k;
        s.radius = radius;
        return s;
    }
    static DegradationSpec jpeg(int quality) {
        DegradationSpec s;
        s.kind = DegradationKind::jpeg_proxy;
        s.quality = quality;
        return s;
    }

    void validate() const {
        switch (kind) {
        case DegradationKind::gaussian_lowlight:
            require(sigma >= 0.0 && sigma <= 0.5, "DegradationSpec: sigma ", sigma, " outside [0, 0.5]");
            require(gain >= 1.0 && gain <= 300.0, "DegradationSpec: gain ", gain, " outside [1, 300]");
            break;
        case DegradationKind::blur:
            require(radius <= 16, "DegradationSpec: blur radius ", radius, " above 16");
            break;
        case DegradationKind::jpeg_proxy:
            require(quality >= 1 && quality <= 100, "DegradationSpec: quality ", quality, " outside [1, 100]");
            break;
        }
    }

    bool is_identity() const {
        switch (kind) {
        case DegradationKind::gaussian_lowlight: return sigma == 0.0 && gain == 1.0;
        case DegradationKind::blur: return radius == 0;
        case DegradationKind::jpeg_proxy: return false;
        }
        return false;
    }

    /// Task scalars, width 8:
    ///   [kind one-hot (3) | lowlight: sigma/0.5, log(gain)/log(300)
    ///                     | blur: kernel one-hot (3), radius/16
    ///                     | jpeg: quality/100]
    std::vector<float> encode() const {
        std::vector<float> e(kEncodingWidth, 0.0f);
        e[static_cast<std::size_t>(kind)] = 1.0f;
        switch (kind) {
        case DegradationKind::gaussian_lowlight:
            e[3] = static_cast<float>(sigma / 0.5);
            e[4] = static_cast<float>(std::log(gain) / std::log(300.0));
            break;
        case DegradationKind::blur:
            e[3 + static_cast<std::size_t>(kernel)] = 1.0f;
            e[6] = static_cast<float>(static_cast<double>(radius) / 16.0);
            break;
        case DegradationKind::jpeg_proxy:
            e[3] = static_cast<float>(quality) / 100.0f;
            break;
        }
        return e;
    }

    std::string describe() const {
        std::ostringstream os;
        os << to_string(kind);
        switch (kind) {
        case DegradationKind::gaussian_lowlight: os << ' ' << sigma << ' ' << gain; break;
        case DegradationKind::blur: os << ' ' << to_string(kernel) << ' ' << radius; break;
        case DegradationKind::jpeg_proxy: os << ' ' << quality; break;
        }
        return os.str();
    }

    /// Parses "kind p1 p2 ...".
    static DegradationSpec parse(const std::vector<std::string>& fields) {
        require(!fields.empty(), "DegradationSpec: empty description");
        const auto kind = parse_degradation_kind(fields[0]);
        auto need = [&](std::size_t n) {
            require(fields.size() == n + 1, "DegradationSpec: ", fields[0], " takes ", n, " parameters, got ",
                    fields.size() - 1);
        };
        auto num = [&](std::size_t i) {
            try {
                std::size_t used = 0;
                const double v = std::stod(fields[i], &used);
                if (used != fields[i].size()) throw std::invalid_argument("trailing");
                return v;
            } catch (const std::exception&) {
                fail_precondition("DegradationSpec: '", fields[i], "' is not a number");
            }
        };
        DegradationSpec s;
        switch (kind) {
        case DegradationKind::gaussian_lowlight:
            need(2);
            s = lowlight(num(1), num(2));
            break;
        case DegradationKind::blur: {
            need(2);
            const double r = num(2);
            require(r >= 0 && r == std::floor(r), "DegradationSpec: blur radius must be a nonnegative integer");
            s = blur(parse_blur_kernel(fields[1]), static_cast<std::size_t>(r));
            break;
        }
        case DegradationKind::jpeg_proxy: {
            need(1);
            const double q = num(1);
            require(q == std::floor(q), "DegradationSpec: quality must be an integer");
            s = jpeg(static_cast<int>(q));
            break;
        }
        }
        s.validate();
        return s;
    }
};

inline Tensor<float> apply_degradation(const Tensor<float>& y, const DegradationSpec& spec, Rng& rng) {
    spec.validate();
    switch (spec.kind) {
    case DegradationKind::gaussian_lowlight: return degrade_gaussian_lowlight(y, spec.sigma, spec.gain, rng);
    case DegradationKind::blur: return degrade_blur(y, spec.kernel, spec.radius);
    case DegradationKind::jpeg_proxy: return degrade_jpeg_proxy(y, spec.quality);
    }
    return y;
}

} // namespace condiff::data
