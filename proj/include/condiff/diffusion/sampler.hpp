#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "condiff/diffusion/process.hpp"

namespace condiff::diffusion {

/// eps_hat for the full state at noise level gamma (inference, no graph).
using Denoiser = std::function<Tensor<float>(const Tensor<float>& z_t, double gamma)>;

/// Ancestral update from step t to t-1:
///   mu = (z - beta_t / sqrt(1 - gamma_t) eps_hat) / sqrt(1 - beta_t)
///   z' = mu + sqrt(beta_t (1 - gamma_{t-1}) / (1 - gamma_t)) n,   no noise at t = 1.
inline Tensor<float> ancestral_step(const Tensor<float>& z, const Tensor<float>& eps_hat, const NoiseSchedule& s,
                                    std::size_t t, Rng& rng) {
    require(eps_hat.shape() == z.shape(), "ancestral_step: prediction ", shape_str(eps_hat.shape()),
            " does not match state ", shape_str(z.shape()));
    const double beta = s.beta(t), g = s.gamma(t), gp = s.gamma(t - 1);
    const double c_eps = beta / std::sqrt(1.0 - g);
    const double c_mu = 1.0 / std::sqrt(1.0 - beta);
    const double sigma = t > 1 ? std::sqrt(beta * (1.0 - gp) / (1.0 - g)) : 0.0;
    const auto& zv = z.vec();
    const auto& ev = eps_hat.vec();
    std::vector<float> out(zv.size());
    for (std::size_t i = 0; i < zv.size(); ++i) {
        out[i] = static_cast<float>(c_mu * (static_cast<double>(zv[i]) - c_eps * static_cast<double>(ev[i])));
    }
    if (t > 1) {
        for (auto& v : out) v += static_cast<float>(sigma * rng.normal());
    }
    try {
        check_finite<float>(out, "ancestral_step");
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at sampling step " + std::to_string(t));
    }
    return Tensor<float>(z.shape(), std::move(out));
}

/// Reverse diffusion from z_T ~ N(0, I); returns the residual estimate r_hat.
inline Tensor<float> sample_residual(const Shape& shape, const Denoiser& f, const NoiseSchedule& schedule, Rng& rng) {
    auto z = normal_tensor<float>(shape, rng);
    for (std::size_t t = schedule.steps(); t >= 1; --t) {
        Tensor<float> eps_hat;
        try {
            eps_hat = f(z, schedule.gamma(t));
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at sampling step " + std::to_string(t));
        }
        z = ancestral_step(z, eps_hat, schedule, t, rng);
    }
    return z;
}

} // namespace condiff::diffusion
