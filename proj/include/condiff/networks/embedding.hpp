#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "condiff/tensor/tensor.hpp"

namespace condiff::networks {

inline constexpr std::size_t kGammaEmbedDim = 64;
inline constexpr std::size_t kTaskScalarDim = 8;
inline constexpr std::size_t kScalarDim = kGammaEmbedDim + kTaskScalarDim;

/// Sinusoidal embedding of 5000 * sqrt(gamma): [sin(a f_i)..., cos(a f_i)...] with
/// f_i = 10000^(-i / (dim/2)). Every embedding has norm sqrt(dim/2).
inline std::vector<double> gamma_embed(double gamma, std::size_t dim = kGammaEmbedDim) {
    require(gamma > 0.0 && gamma <= 1.0, "gamma_embed: gamma ", gamma, " outside (0, 1]");
    require(dim >= 2 && dim % 2 == 0, "gamma_embed: dim ", dim, " must be even and positive");
    const std::size_t half = dim / 2;
    const double a = 5000.0 * std::sqrt(gamma);
    std::vector<double> out(dim);
    for (std::size_t i = 0; i < half; ++i) {
        const double f = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        out[i] = std::sin(a * f);
        out[half + i] = std::cos(a * f);
    }
    return out;
}

/// Scalar conditioning rows [B, 72]: gamma embedding followed by the 8 task scalars.
template <class T>
Tensor<T> scalar_condition(const std::vector<double>& gammas, const std::vector<std::vector<float>>& task) {
    require(task.empty() || task.size() == gammas.size(), "scalar_condition: ", gammas.size(),
            " gammas but ", task.size(), " task rows");
    const std::size_t B = gammas.size();
    std::vector<T> data(B * kScalarDim, T(0));
    for (std::size_t b = 0; b < B; ++b) {
        const auto e = gamma_embed(gammas[b]);
        for (std::size_t i = 0; i < kGammaEmbedDim; ++i) data[b * kScalarDim + i] = static_cast<T>(e[i]);
        if (!task.empty()) {
            require(task[b].size() <= kTaskScalarDim, "scalar_condition: task row has ", task[b].size(),
                    " entries, at most ", kTaskScalarDim, " allowed");
            for (std::size_t i = 0; i < task[b].size(); ++i) {
                data[b * kScalarDim + kGammaEmbedDim + i] = static_cast<T>(task[b][i]);
            }
        }
    }
    return Tensor<T>(Shape{B, kScalarDim}, std::move(data));
}

} // namespace condiff::networks
