#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "condiff/nn/params.hpp"
#include "condiff/tensor/autograd.hpp"

namespace condiff::train {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// First/second moments per trainable parameter, in the store's declaration order.
template <class T>
struct OptimState {
    AdamWConfig cfg;
    std::uint64_t step = 0;
    std::vector<std::string> names;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;

    static OptimState create(const nn::ParamStore<T>& params, AdamWConfig cfg) {
        OptimState s;
        s.cfg = cfg;
        for (const auto& e : params.entries()) {
            if (!e.trainable) continue;
            s.names.push_back(e.name);
            s.m.emplace_back(e.tensor.size(), T(0));
            s.v.emplace_back(e.tensor.size(), T(0));
        }
        return s;
    }
};

/// Decoupled weight decay:
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
///   p = p (1 - lr wd) - lr * m_hat / (sqrt(v_hat) + eps)
/// Trainable parameters the loss never reached receive a zero gradient.
template <class T>
void adamw_step(nn::ParamStore<T>& params, const Gradients<T>& grads, OptimState<T>& state) {
    const auto& c = state.cfg;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t), bc2 = 1.0 - std::pow(c.beta2, t);
    const double decay = 1.0 - c.lr * c.weight_decay;
    std::size_t k = 0;
    for (auto& e : params.entries()) {
        if (!e.trainable) continue;
        require(k < state.names.size() && state.names[k] == e.name, "adamw_step: optimizer state does not match '",
                e.name, "'");
        const std::vector<T>* g = grads.raw(e.tensor);
        if (g) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                if (!std::isfinite((*g)[i])) {
                    throw NumericError("adamw_step: non-finite gradient for parameter '" + e.name + "'");
                }
            }
        }
        auto p = e.tensor.mutable_leaf_data();
        auto& m = state.m[k];
        auto& v = state.v[k];
        require(m.size() == p.size(), "adamw_step: moment size mismatch for '", e.name, "'");
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g ? static_cast<double>((*g)[i]) : 0.0;
            const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * gi;
            const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = (mi / bc1) / (std::sqrt(vi / bc2) + c.eps);
            p[i] = static_cast<T>(static_cast<double>(p[i]) * decay - c.lr * update);
        }
        ++k;
    }
}

/// Shadow copy of the trainable parameters.
template <class T>
struct EMAState {
    double decay = 0.999;
    nn::ParamStore<T> shadow;

    static EMAState create(const nn::ParamStore<T>& params, double decay) {
        require(decay >= 0.0 && decay < 1.0, "EMAState: decay ", decay, " outside [0, 1)");
        EMAState s;
        s.decay = decay;
        for (const auto& e : params.entries()) {
            if (e.trainable) s.shadow.add(e.name, e.tensor.detach(), true);
        }
        return s;
    }
};

/// shadow = decay * shadow + (1 - decay) * params
template <class T>
void ema_update(EMAState<T>& ema, const nn::ParamStore<T>& params) {
    for (const auto& e : params.entries()) {
        if (!e.trainable) continue;
        auto s = ema.shadow.at_mut(e.name).mutable_leaf_data();
        const auto p = e.tensor.data();
        require(s.size() == p.size(), "ema_update: shape mismatch for '", e.name, "'");
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = static_cast<T>(ema.decay * static_cast<double>(s[i]) + (1.0 - ema.decay) * static_cast<double>(p[i]));
        }
    }
}

/// `params` with every trainable entry replaced by its shadow value.
template <class T>
nn::ParamStore<T> with_ema_weights(const nn::ParamStore<T>& params, const EMAState<T>& ema) {
    nn::ParamStore<T> out;
    for (const auto& e : params.entries()) {
        out.add(e.name, e.trainable ? ema.shadow.at(e.name).detach() : e.tensor.detach(), e.trainable);
    }
    return out;
}

} // namespace condiff::train
