#pragma once

#include <string>
#include <vector>

#include "condiff/networks/config.hpp"

namespace condiff::networks {

/// Plain conv+Swish UNet with a global input shortcut: u(x) = x + conv_out(...).
inline nn::ParamSpecs predictor_specs(const PredictorConfig& cfg) {
    nn::ParamSpecs specs;
    const std::size_t S = cfg.num_stages;
    nn::add_conv_specs(specs, "conv_in", cfg.channels(0), 3, 3);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) {
            nn::add_conv_specs(specs, "enc." + std::to_string(s) + "." + std::to_string(j), cfg.channels(s),
                               cfg.channels(s), 3);
        }
        if (s + 1 < S) nn::add_conv_specs(specs, "down." + std::to_string(s), cfg.channels(s + 1), cfg.channels(s), 3);
    }
    for (std::size_t s = S; s-- > 0;) {
        const std::string tag = std::to_string(s);
        if (s + 1 < S) {
            nn::add_conv_specs(specs, "up." + tag, cfg.channels(s), cfg.channels(s + 1), 3);
            nn::add_conv_specs(specs, "merge." + tag, cfg.channels(s), 2 * cfg.channels(s), 1);
        }
        for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) {
            nn::add_conv_specs(specs, "dec." + tag + "." + std::to_string(j), cfg.channels(s), cfg.channels(s), 3);
        }
    }
    nn::add_conv_specs(specs, "conv_out", 3, cfg.channels(0), 3, true, nn::Init::zeros);
    return specs;
}

template <class T>
Tensor<T> initial_predictor_forward(const Tensor<T>& x, const PredictorConfig& cfg, const nn::ParamStore<T>& p) {
    require(x.rank() == 4 && x.dim(1) == 3, "initial_predictor_forward: expected [B,3,H,W], got ",
            shape_str(x.shape()));
    check_divisible(x.dim(2), x.dim(3), cfg.divisor(), "initial_predictor_forward");
    using conditioning::detail::conv_named;
    const std::size_t S = cfg.num_stages;

    auto h = nn::swish(conv_named(x, p, "conv_in"));
    std::vector<Tensor<T>> skips;
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) {
            h = nn::swish(conv_named(h, p, "enc." + std::to_string(s) + "." + std::to_string(j)));
        }
        if (s + 1 < S) {
            skips.push_back(h);
            h = nn::swish(conv_named(h, p, "down." + std::to_string(s), 2));
        }
    }
    for (std::size_t s = S; s-- > 0;) {
        const std::string tag = std::to_string(s);
        if (s + 1 < S) {
            h = conv_named(nn::nearest_upsample2x(h), p, "up." + tag);
            h = nn::swish(conv_named(concat_channels<T>({h, skips[s]}), p, "merge." + tag));
        }
        for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) {
            h = nn::swish(conv_named(h, p, "dec." + tag + "." + std::to_string(j)));
        }
    }
    return add(x, conv_named(h, p, "conv_out"));
}

} // namespace condiff::networks
