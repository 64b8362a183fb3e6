#pragma once

#include <string>
#include <vector>

#include "condiff/networks/config.hpp"

namespace condiff::networks {

namespace detail {

inline std::string block_name(const char* side, std::size_t s, std::size_t j) {
    return std::string(side) + "." + std::to_string(s) + "." + std::to_string(j);
}

} // namespace detail

/// Parameter declarations of the diffusion UNet, in forward order.
inline nn::ParamSpecs unet_specs(const UNetConfig& cfg) {
    cfg.validate();
    nn::ParamSpecs specs;
    const std::size_t S = cfg.num_stages;
    nn::add_conv_specs(specs, "conv_in", cfg.channels(0), 6, cfg.kernel);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) {
            conditioning::add_block_specs(specs, detail::block_name("enc", s, j), cfg.block(s));
        }
        if (s + 1 < S) {
            nn::add_conv_specs(specs, "down." + std::to_string(s), cfg.channels(s + 1), cfg.channels(s), cfg.kernel);
        }
    }
    for (std::size_t s = S; s-- > 0;) {
        const std::string tag = std::to_string(s);
        if (s + 1 < S) {
            nn::add_conv_specs(specs, "up." + tag, cfg.channels(s), cfg.channels(s + 1), cfg.kernel);
            nn::add_conv_specs(specs, "merge." + tag, cfg.channels(s), 2 * cfg.channels(s), 1);
        }
        for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) {
            conditioning::add_block_specs(specs, detail::block_name("dec", s, j), cfg.block(s));
        }
    }
    if (cfg.norm != NormMode::none) nn::add_norm_specs(specs, "norm_out", cfg.channels(0));
    nn::add_conv_specs(specs, "conv_out", 3, cfg.channels(0), cfg.kernel, true, nn::Init::zeros);
    return specs;
}

/// Parameter count from the configuration alone (see README for the derivation).
inline std::size_t unet_param_count_closed_form(const UNetConfig& cfg) {
    const std::size_t k2 = cfg.kernel * cfg.kernel, S = cfg.num_stages, D = cfg.scalar_dim;
    const std::size_t Cg = cfg.guidance_channels();
    const bool guided = cfg.guidance != GuidanceSource::none;
    auto conv = [](std::size_t co, std::size_t ci, std::size_t kk) { return co * ci * kk + co; };

    auto block = [&](std::size_t C) {
        const std::size_t h = std::max<std::size_t>(4, C / 2);
        std::size_t n = conv(C, C, k2);
        if (cfg.norm != NormMode::none) n += 4 * C;
        std::size_t width = 0;
        switch (cfg.integration) {
        case IntegrationMode::akgm: width = cfg.bases; break;
        case IntegrationMode::addition:
        case IntegrationMode::concatenation: width = C; break;
        case IntegrationMode::adain: width = 2 * C; break;
        case IntegrationMode::none: width = 0; break;
        }
        if (width > 0) {
            if (guided) n += conv(2 * h, Cg, 9) + conv(width, h, 9);
            n += (h * D + h) + (width * h + width);
        }
        if (cfg.integration == IntegrationMode::akgm) {
            n += C * C * k2; // N bases of C x (C/N) x k x k
        } else {
            n += conv(C, C, k2);
            if (cfg.integration == IntegrationMode::concatenation && guided) n += conv(C, 2 * C, 1);
        }
        return n;
    };

    std::size_t total = conv(cfg.channels(0), 6, k2);
    for (std::size_t s = 0; s < S; ++s) {
        const std::size_t C = cfg.channels(s);
        total += 2 * cfg.blocks_per_stage * block(C);
        if (s + 1 < S) {
            const std::size_t C1 = cfg.channels(s + 1);
            total += conv(C1, C, k2) + conv(C, C1, k2) + conv(C, 2 * C, 1);
        }
    }
    if (cfg.norm != NormMode::none) total += 2 * cfg.channels(0);
    total += conv(3, cfg.channels(0), k2);
    return total;
}

/// Noise prediction eps_hat = f(z_t, x, gamma, task scalars) guided by `guidance`.
/// z_t, x, guidance: [B,3,H,W]; scalars: [B, scalar_dim]. Guidance is ignored for
/// the internal_feature and none sources.
template <class T>
Tensor<T> diffusion_unet_forward(const Tensor<T>& z_t, const Tensor<T>& x, const Tensor<T>& guidance,
                                 const Tensor<T>& scalars, const UNetConfig& cfg, const nn::ParamStore<T>& p) {
    require(z_t.rank() == 4 && z_t.dim(1) == 3, "diffusion_unet_forward: z_t must be [B,3,H,W], got ",
            shape_str(z_t.shape()));
    require(x.shape() == z_t.shape(), "diffusion_unet_forward: x ", shape_str(x.shape()), " vs z_t ",
            shape_str(z_t.shape()));
    check_divisible(z_t.dim(2), z_t.dim(3), cfg.divisor(), "diffusion_unet_forward");
    require(scalars.rank() == 2 && scalars.dim(0) == z_t.dim(0) && scalars.dim(1) == cfg.scalar_dim,
            "diffusion_unet_forward: scalars must be [", z_t.dim(0), ",", cfg.scalar_dim, "], got ",
            shape_str(scalars.shape()));
    const bool image_guidance =
        cfg.guidance == GuidanceSource::initial_predictor || cfg.guidance == GuidanceSource::degraded_image;
    if (image_guidance) {
        require(guidance.defined() && guidance.shape() == z_t.shape(), "diffusion_unet_forward: guidance must be ",
                shape_str(z_t.shape()));
    }
    using conditioning::detail::conv_named;
    const std::size_t S = cfg.num_stages;

    auto h = conv_named(concat_channels<T>({z_t, x}), p, "conv_in");

    std::vector<Tensor<T>> guide(S);
    if (cfg.guidance != GuidanceSource::none) {
        const Tensor<T> full = image_guidance ? guidance : h;
        for (std::size_t s = 0; s < S; ++s) guide[s] = s == 0 ? full : nn::avg_downsample(full, std::size_t(1) << s);
    }

    std::vector<Tensor<T>> skips;
    for (std::size_t s = 0; s < S; ++s) {
        const auto bc = cfg.block(s);
        const conditioning::BlockContext<T> ctx{guide[s], scalars};
        for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) {
            h = conditioning::basic_block_forward(h, ctx, bc, p, detail::block_name("enc", s, j));
        }
        if (s + 1 < S) {
            skips.push_back(h);
            h = conv_named(h, p, "down." + std::to_string(s), 2);
        }
    }
    for (std::size_t s = S; s-- > 0;) {
        const std::string tag = std::to_string(s);
        const auto bc = cfg.block(s);
        const conditioning::BlockContext<T> ctx{guide[s], scalars};
        if (s + 1 < S) {
            h = conv_named(nn::nearest_upsample2x(h), p, "up." + tag);
            h = conv_named(concat_channels<T>({h, skips[s]}), p, "merge." + tag);
        }
        for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) {
            h = conditioning::basic_block_forward(h, ctx, bc, p, detail::block_name("dec", s, j));
        }
    }
    h = conditioning::apply_norm(h, cfg.block(0), p, "norm_out");
    h = conditioning::apply_activation(h, cfg.activation);
    return conv_named(h, p, "conv_out");
}

} // namespace condiff::networks
