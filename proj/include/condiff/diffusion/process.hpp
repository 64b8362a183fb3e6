#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "condiff/core/rng.hpp"
#include "condiff/diffusion/schedule.hpp"
#include "condiff/tensor/ops.hpp"

namespace condiff::diffusion {

template <class T>
Tensor<T> normal_tensor(const Shape& shape, Rng& rng) {
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal());
    return Tensor<T>(shape, std::move(v));
}

/// Draws t uniformly from {1..T}, then gamma uniformly from (gamma_t, gamma_{t-1}].
inline double sample_gamma_continuous(const NoiseSchedule& s, Rng& rng) {
    const std::size_t t = 1 + static_cast<std::size_t>(rng.below(s.steps()));
    const double lo = s.gamma(t), hi = s.gamma(t - 1);
    return lo + (hi - lo) * (1.0 - rng.uniform());
}

/// sqrt(gamma) r0 + sqrt(1 - gamma) eps
template <class T>
Tensor<T> forward_diffuse(const Tensor<T>& r0, double gamma, const Tensor<T>& eps) {
    require(gamma > 0.0 && gamma <= 1.0, "forward_diffuse: gamma ", gamma, " outside (0, 1]");
    require(r0.shape() == eps.shape(), "forward_diffuse: r0 ", shape_str(r0.shape()), " vs eps ",
            shape_str(eps.shape()));
    return add(scale(r0, static_cast<T>(std::sqrt(gamma))), scale(eps, static_cast<T>(std::sqrt(1.0 - gamma))));
}

/// Per-item version: row b of r0/eps uses gammas[b].
template <class T>
Tensor<T> forward_diffuse_batch(const Tensor<T>& r0, const std::vector<double>& gammas, const Tensor<T>& eps) {
    require(r0.shape() == eps.shape(), "forward_diffuse: r0 ", shape_str(r0.shape()), " vs eps ",
            shape_str(eps.shape()));
    require(r0.rank() >= 1 && r0.dim(0) == gammas.size(), "forward_diffuse: ", gammas.size(),
            " gammas for batch ", r0.dim(0));
    Shape cs(r0.rank(), 1);
    cs[0] = gammas.size();
    std::vector<T> a(gammas.size()), b(gammas.size());
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        require(gammas[i] > 0.0 && gammas[i] <= 1.0, "forward_diffuse: gamma ", gammas[i], " outside (0, 1]");
        a[i] = static_cast<T>(std::sqrt(gammas[i]));
        b[i] = static_cast<T>(std::sqrt(1.0 - gammas[i]));
    }
    return add(mul(r0, Tensor<T>(cs, a)), mul(eps, Tensor<T>(cs, b)));
}

template <class T>
Tensor<T> noise_loss(const Tensor<T>& eps_hat, const Tensor<T>& eps, DiffusionConfig::LossNorm norm) {
    const auto d = sub(eps_hat, eps);
    return norm == DiffusionConfig::LossNorm::l2 ? mean(square(d)) : mean(abs(d));
}

/// Noise-prediction model evaluated on batch rows [begin, end):
/// eps_hat = f(z_t rows, gammas of those rows, begin, end).
template <class T>
using EpsModel =
    std::function<Tensor<T>(const Tensor<T>& z_t, const std::vector<double>& gammas, std::size_t begin, std::size_t end)>;

template <class T>
struct LossSample {
    Tensor<T> loss;
    std::vector<double> gammas;
};

/// Residual objective: draws gamma and eps per item, diffuses r0 and scores the
/// model's noise prediction. A non-finite forward pass is replayed item by item
/// to name the offending batch index.
template <class T>
LossSample<T> training_loss(const Tensor<T>& r0, const EpsModel<T>& model, const NoiseSchedule& schedule, Rng& rng,
                            DiffusionConfig::LossNorm norm = DiffusionConfig::LossNorm::l2) {
    require(r0.rank() >= 1 && r0.dim(0) >= 1, "training_loss: empty batch");
    const std::size_t B = r0.dim(0);
    std::vector<double> gammas(B);
    for (auto& g : gammas) g = sample_gamma_continuous(schedule, rng);
    const auto eps = normal_tensor<T>(r0.shape(), rng);
    const auto z = forward_diffuse_batch(r0, gammas, eps);
    try {
        return {noise_loss(model(z, gammas, 0, B), eps, norm), gammas};
    } catch (const NumericError& err) {
        for (std::size_t b = 0; b < B; ++b) {
            try {
                const std::vector<double> gb{gammas[b]};
                noise_loss(model(slice(z, 0, b, b + 1), gb, b, b + 1), slice(eps, 0, b, b + 1), norm);
            } catch (const NumericError& item_err) {
                throw NumericError(std::string(item_err.what()) + " (batch index " + std::to_string(b) + ")");
            }
        }
        throw;
    }
}

} // namespace condiff::diffusion
