#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <vector>

#include "condiff/core/error.hpp"

namespace condiff::diffusion {

/// betas[t-1] and gammas[t-1] for t = 1..T; gamma(0) is 1 by convention.
class NoiseSchedule {
public:
    NoiseSchedule() = default;

    NoiseSchedule(std::vector<double> betas, std::vector<double> gammas)
        : betas_(std::move(betas)), gammas_(std::move(gammas)) {
        require(!betas_.empty() && betas_.size() == gammas_.size(), "NoiseSchedule: ", betas_.size(),
                " betas vs ", gammas_.size(), " gammas");
        double prev = 1.0;
        for (std::size_t i = 0; i < betas_.size(); ++i) {
            require(betas_[i] > 0.0 && betas_[i] < 1.0, "NoiseSchedule: beta_", i + 1, " = ", betas_[i],
                    " outside (0, 1)");
            require(gammas_[i] > 0.0 && gammas_[i] < prev, "NoiseSchedule: gamma not strictly decreasing at t = ",
                    i + 1);
            prev = gammas_[i];
        }
    }

    /// Cumulative products of (1 - beta).
    static NoiseSchedule from_betas(std::vector<double> betas) {
        std::vector<double> g(betas.size());
        double acc = 1.0;
        for (std::size_t i = 0; i < betas.size(); ++i) {
            acc *= 1.0 - betas[i];
            g[i] = acc;
        }
        return NoiseSchedule(std::move(betas), std::move(g));
    }

    /// T betas evenly spaced over [beta_start, beta_end].
    static NoiseSchedule linear(std::size_t T, double beta_start, double beta_end) {
        require(T >= 1, "NoiseSchedule::linear: T must be positive");
        std::vector<double> b(T);
        for (std::size_t i = 0; i < T; ++i) {
            b[i] = T == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(T - 1);
        }
        return from_betas(std::move(b));
    }

    std::size_t steps() const { return betas_.size(); }
    double beta(std::size_t t) const { return betas_.at(t - 1); }
    double gamma(std::size_t t) const { return t == 0 ? 1.0 : gammas_.at(t - 1); }
    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& gammas() const { return gammas_; }

    /// One "t beta gamma" row per step.
    void dump(std::ostream& os) const {
        for (std::size_t t = 1; t <= steps(); ++t) {
            os << t << ' ' << std::setprecision(17) << beta(t) << ' ' << gamma(t) << '\n';
        }
    }

private:
    std::vector<double> betas_;
    std::vector<double> gammas_;
};

struct DiffusionConfig {
    std::size_t train_steps = 2000;
    double beta_start = 1e-6;
    double beta_end = 1e-2;
    std::size_t infer_steps = 50;
    enum class LossNorm { l2, l1 } loss_norm = LossNorm::l2;
    double residual_scale = 1.0;

    NoiseSchedule train_schedule() const { return NoiseSchedule::linear(train_steps, beta_start, beta_end); }
};

/// Picks `steps` gammas at fractional indices 1 + k (T-1)/(steps-1) of the training
/// sequence (linear interpolation between neighbours) and rederives betas from
/// consecutive gamma ratios.
inline NoiseSchedule build_inference_schedule(const NoiseSchedule& train, std::size_t steps) {
    const std::size_t T = train.steps();
    require(steps >= 2, "build_inference_schedule: need at least 2 steps, got ", steps);
    require(steps <= T, "build_inference_schedule: ", steps, " steps exceed the training length ", T);
    std::vector<double> gammas(steps), betas(steps);
    std::vector<bool> integral(steps);
    std::vector<std::size_t> index(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const std::size_t num = k * (T - 1), den = steps - 1;
        const std::size_t lo = 1 + num / den;
        const std::size_t rem = num % den;
        index[k] = lo;
        integral[k] = rem == 0;
        if (rem == 0) {
            gammas[k] = train.gamma(lo);
        } else {
            const double f = static_cast<double>(rem) / static_cast<double>(den);
            gammas[k] = (1.0 - f) * train.gamma(lo) + f * train.gamma(lo + 1);
        }
    }
    for (std::size_t k = 0; k < steps; ++k) {
        const bool exact = integral[k] && (k == 0 ? index[k] == 1 : integral[k - 1] && index[k] == index[k - 1] + 1);
        if (exact) {
            betas[k] = train.beta(index[k]);
        } else {
            betas[k] = 1.0 - gammas[k] / (k == 0 ? 1.0 : gammas[k - 1]);
        }
    }
    return NoiseSchedule(std::move(betas), std::move(gammas));
}

} // namespace condiff::diffusion
