#pragma once

#include <algorithm>
#include <limits>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "condiff/core/rng.hpp"
#include "condiff/tensor/autograd.hpp"
#include "condiff/tensor/ops.hpp"

namespace condiff {

/// A differentiable function of a list of tensors, evaluated in 64-bit mode.
using DiffFunction = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients against central differences over every input
/// coordinate. Non-scalar outputs are reduced with a fixed random projection so
/// that every output element contributes.
/// Error per coordinate: |analytic - numeric| / max(1e-8, |numeric|).
inline GradCheckResult finite_diff_check_detailed(const DiffFunction& fn,
                                                  const std::vector<Tensor<double>>& inputs,
                                                  double eps = 1e-4, std::uint64_t seed = 1234) {
    require(eps > 0.0, "finite_diff_check: eps must be positive");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        check_finite<double>(inputs[i].data(), "finite_diff_check input " + std::to_string(i));
    }

    std::vector<Tensor<double>> tracked;
    for (const auto& t : inputs) tracked.push_back(Tensor<double>(t.shape(), t.vec(), true));

    Tensor<double> probe = fn(tracked);
    Tensor<double> projection;
    if (probe.size() != 1) {
        Rng rng(seed);
        std::vector<double> w(probe.size());
        for (auto& v : w) v = rng.uniform(-1.0, 1.0);
        projection = Tensor<double>(probe.shape(), std::move(w));
    }
    auto reduce = [&](const Tensor<double>& out) {
        return projection.defined() ? sum(mul(out, projection)) : reshape(out, Shape{});
    };

    auto grads = backward(reduce(probe));

    GradCheckResult result;
    std::vector<Tensor<double>> work = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto analytic = grads.get_or_zero(tracked[i]);
        std::vector<double> values = inputs[i].vec();
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double saved = values[j];
            values[j] = saved + eps;
            work[i] = Tensor<double>(inputs[i].shape(), values);
            const double plus = reduce(fn(work)).item();
            values[j] = saved - eps;
            work[i] = Tensor<double>(inputs[i].shape(), values);
            const double minus = reduce(fn(work)).item();
            values[j] = saved;
            const double numeric = (plus - minus) / (2.0 * eps);
            // Differences below the central difference's own rounding noise are not measurable.
            const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                                 std::max({1.0, std::abs(plus), std::abs(minus)}) / eps;
            const double diff = std::abs(analytic[j] - numeric);
            const double err = diff <= noise ? 0.0 : diff / std::max(1e-8, std::abs(numeric));
            ++result.coordinates;
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_input = i;
                result.worst_index = j;
            }
        }
        work[i] = inputs[i];
    }
    return result;
}

inline double finite_diff_check(const DiffFunction& fn, const std::vector<Tensor<double>>& inputs,
                                double eps = 1e-4) {
    return finite_diff_check_detailed(fn, inputs, eps).max_rel_error;
}

} // namespace condiff
