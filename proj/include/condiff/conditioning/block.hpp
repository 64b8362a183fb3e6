#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>

#include "condiff/conditioning/akgm.hpp"
#include "condiff/nn/layers.hpp"
#include "condiff/nn/params.hpp"

namespace condiff::conditioning {

enum class IntegrationMode { akgm, addition, concatenation, adain, none };
enum class NormMode { layer, group, none };
enum class ActivationMode { swish, relu };
enum class GuidanceSource { initial_predictor, degraded_image, internal_feature, none };

inline std::string to_string(IntegrationMode m) {
    switch (m) {
    case IntegrationMode::akgm: return "akgm";
    case IntegrationMode::addition: return "addition";
    case IntegrationMode::concatenation: return "concatenation";
    case IntegrationMode::adain: return "adain";
    case IntegrationMode::none: return "none";
    }
    return "?";
}

inline std::string to_string(NormMode m) {
    switch (m) {
    case NormMode::layer: return "layer";
    case NormMode::group: return "group";
    case NormMode::none: return "none";
    }
    return "?";
}

inline std::string to_string(ActivationMode m) { return m == ActivationMode::swish ? "swish" : "relu"; }

inline std::string to_string(GuidanceSource s) {
    switch (s) {
    case GuidanceSource::initial_predictor: return "initial_predictor";
    case GuidanceSource::degraded_image: return "degraded_image";
    case GuidanceSource::internal_feature: return "internal_feature";
    case GuidanceSource::none: return "none";
    }
    return "?";
}

inline IntegrationMode parse_integration_mode(const std::string& s) {
    for (auto m : {IntegrationMode::akgm, IntegrationMode::addition, IntegrationMode::concatenation,
                   IntegrationMode::adain, IntegrationMode::none}) {
        if (to_string(m) == s) return m;
    }
    fail_precondition("unknown integration mode '", s, "'");
}

inline NormMode parse_norm_mode(const std::string& s) {
    for (auto m : {NormMode::layer, NormMode::group, NormMode::none}) {
        if (to_string(m) == s) return m;
    }
    fail_precondition("unknown norm mode '", s, "'");
}

inline ActivationMode parse_activation_mode(const std::string& s) {
    for (auto m : {ActivationMode::swish, ActivationMode::relu}) {
        if (to_string(m) == s) return m;
    }
    fail_precondition("unknown activation mode '", s, "'");
}

inline GuidanceSource parse_guidance_source(const std::string& s) {
    for (auto m : {GuidanceSource::initial_predictor, GuidanceSource::degraded_image,
                   GuidanceSource::internal_feature, GuidanceSource::none}) {
        if (to_string(m) == s) return m;
    }
    fail_precondition("unknown guidance source '", s, "'");
}

struct BlockConfig {
    std::size_t channels = 32;
    std::size_t bases = 4;
    std::size_t kernel = 3;
    IntegrationMode integration = IntegrationMode::akgm;
    NormMode norm = NormMode::layer;
    ActivationMode activation = ActivationMode::swish;
    GuidanceSource guidance = GuidanceSource::initial_predictor;
    std::size_t guidance_channels = 3;
    std::size_t scalar_dim = 72;
    bool softmax_fusion = false;

    std::size_t hidden() const { return std::max<std::size_t>(4, channels / 2); }
    std::size_t group_count() const { return std::gcd<std::size_t>(32, channels); }
    bool has_guidance() const { return guidance != GuidanceSource::none; }

    void validate() const {
        require(channels >= 1, "BlockConfig: zero channels");
        require(kernel % 2 == 1, "BlockConfig: kernel size ", kernel, " must be odd");
        require(scalar_dim >= 1, "BlockConfig: scalar_dim must be positive");
        if (has_guidance()) require(guidance_channels >= 1, "BlockConfig: guidance needs channels");
        if (integration == IntegrationMode::akgm) {
            require(bases >= 1 && channels % bases == 0, "BlockConfig: base count ", bases,
                    " must divide channels ", channels);
        }
    }

    /// Width of G and S: N for akgm, C for addition/concatenation, 2C for adain.
    std::size_t cim_width() const {
        switch (integration) {
        case IntegrationMode::akgm: return bases;
        case IntegrationMode::addition:
        case IntegrationMode::concatenation: return channels;
        case IntegrationMode::adain: return 2 * channels;
        case IntegrationMode::none: return 0;
        }
        return 0;
    }
};

/// Parameter declarations for one block under `prefix`.
inline void add_block_specs(nn::ParamSpecs& specs, const std::string& prefix, const BlockConfig& cfg) {
    cfg.validate();
    const std::size_t C = cfg.channels, k = cfg.kernel, h = cfg.hidden();
    if (cfg.norm != NormMode::none) nn::add_norm_specs(specs, prefix + ".norm1", C);
    nn::add_conv_specs(specs, prefix + ".conv1", C, C, k);
    if (cfg.norm != NormMode::none) nn::add_norm_specs(specs, prefix + ".norm2", C);

    const std::size_t width = cfg.cim_width();
    if (width > 0) {
        if (cfg.has_guidance()) {
            nn::add_conv_specs(specs, prefix + ".cim.guide1", 2 * h, cfg.guidance_channels, 3);
            nn::add_conv_specs(specs, prefix + ".cim.guide2", width, h, 3);
        }
        nn::add_linear_specs(specs, prefix + ".cim.scalar1", h, cfg.scalar_dim);
        nn::add_linear_specs(specs, prefix + ".cim.scalar2", width, h);
    }
    if (cfg.integration == IntegrationMode::akgm) {
        const std::size_t N = cfg.bases, Cg = C / N;
        specs.push_back({prefix + ".akgm.bases", Shape{N, C, Cg, k, k}, nn::Init::fan_in_uniform, Cg * k * k});
    } else {
        if (cfg.integration == IntegrationMode::concatenation && cfg.has_guidance()) {
            nn::add_conv_specs(specs, prefix + ".proj", C, 2 * C, 1);
        }
        nn::add_conv_specs(specs, prefix + ".conv2", C, C, k);
    }
}

inline std::size_t block_param_count(const BlockConfig& cfg) {
    nn::ParamSpecs specs;
    add_block_specs(specs, "b", cfg);
    return nn::count_params(specs);
}

namespace detail {

template <class T>
Tensor<T> bias_or_none(const nn::ParamStore<T>& p, const std::string& name) {
    return p.contains(name) ? p.at(name) : Tensor<T>();
}

template <class T>
Tensor<T> conv_named(const Tensor<T>& x, const nn::ParamStore<T>& p, const std::string& name,
                     std::size_t stride = 1) {
    const auto& w = p.at(name + ".weight");
    Conv2dOptions opt;
    opt.stride = stride;
    opt.padding = w.dim(2) / 2;
    return conv2d(x, w, bias_or_none(p, name + ".bias"), opt);
}

} // namespace detail

template <class T>
Tensor<T> apply_norm(const Tensor<T>& x, const BlockConfig& cfg, const nn::ParamStore<T>& p,
                     const std::string& name) {
    switch (cfg.norm) {
    case NormMode::layer: return nn::layer_norm_channels(x, p.at(name + ".scale"), p.at(name + ".shift"));
    case NormMode::group:
        return nn::group_norm_channels(x, cfg.group_count(), p.at(name + ".scale"), p.at(name + ".shift"));
    case NormMode::none: return x;
    }
    return x;
}

template <class T>
Tensor<T> apply_activation(const Tensor<T>& x, ActivationMode mode) {
    return mode == ActivationMode::swish ? nn::swish(x) : nn::relu(x);
}

/// Guidance branch of the conditional injection module: average-pool the guidance
/// to (H, W), then conv3x3 -> SimpleGate -> conv3x3. Result [B, width, H, W].
template <class T>
Tensor<T> compute_guidance_features(const Tensor<T>& guidance, std::size_t H, std::size_t W,
                                    const nn::ParamStore<T>& p, const std::string& prefix) {
    require(guidance.rank() == 4, "compute_guidance_features: guidance must be [B,C,H,W], got ",
            shape_str(guidance.shape()));
    const std::size_t Hg = guidance.dim(2), Wg = guidance.dim(3);
    require(H >= 1 && W >= 1 && Hg >= H && Wg >= W && Hg % H == 0 && Wg % W == 0,
            "compute_guidance_features: cannot rescale ", Hg, "x", Wg, " to ", H, "x", W,
            " by an integer factor");
    const auto pooled = nn::avg_pool(guidance, Hg / H, Wg / W);
    const auto hidden = nn::simple_gate(detail::conv_named(pooled, p, prefix + ".cim.guide1"));
    return detail::conv_named(hidden, p, prefix + ".cim.guide2");
}

/// Scalar branch: linear -> Swish -> linear, reshaped to [B, width, 1, 1].
template <class T>
Tensor<T> compute_scalar_features(const Tensor<T>& scalars, const nn::ParamStore<T>& p,
                                  const std::string& prefix) {
    require(scalars.rank() == 2, "compute_scalar_features: scalars must be [B,D], got ",
            shape_str(scalars.shape()));
    const auto& w1 = p.at(prefix + ".cim.scalar1.weight");
    require(scalars.dim(1) == w1.dim(1), "compute_scalar_features: scalar width ", scalars.dim(1),
            " but the branch expects ", w1.dim(1));
    auto h = nn::swish(nn::linear(scalars, w1, p.at(prefix + ".cim.scalar1.bias")));
    auto s = nn::linear(h, p.at(prefix + ".cim.scalar2.weight"), p.at(prefix + ".cim.scalar2.bias"));
    return reshape(s, Shape{scalars.dim(0), s.dim(1), 1, 1});
}

/// M = G * S with S broadcast over space.
template <class T>
Tensor<T> fuse_weights(const Tensor<T>& G, const Tensor<T>& S, bool softmax = false) {
    require(G.rank() == 4 && S.rank() == 4, "fuse_weights: expected [B,N,H,W] and [B,N,1,1]");
    require(G.dim(0) == S.dim(0) && G.dim(1) == S.dim(1) && S.dim(2) == 1 && S.dim(3) == 1,
            "fuse_weights: G ", shape_str(G.shape()), " and S ", shape_str(S.shape()), " disagree");
    auto M = mul(G, S);
    return softmax ? nn::softmax_channels(M) : M;
}

/// Inputs shared by every block of one forward pass.
template <class T>
struct BlockContext {
    Tensor<T> guidance; ///< full-resolution guidance, or pooled per stage by the caller
    Tensor<T> scalars;  ///< [B, D]
};

/// Diffusion model block:
///   out = x + DynConv(Norm2(Act(Conv1(Norm1(x)))))
/// with DynConv the AKGM in akgm mode, or a static conv plus the ablation injection otherwise.
/// Addition and concatenation inject into the branch input; the shortcut always carries x.
template <class T>
Tensor<T> basic_block_forward(const Tensor<T>& x, const BlockContext<T>& ctx, const BlockConfig& cfg,
                              const nn::ParamStore<T>& p, const std::string& prefix) {
    require(x.rank() == 4 && x.dim(1) == cfg.channels, "basic_block_forward: input ", shape_str(x.shape()),
            " does not have ", cfg.channels, " channels");
    const std::size_t B = x.dim(0), H = x.dim(2), W = x.dim(3);

    Tensor<T> G, S;
    if (cfg.cim_width() > 0) {
        S = compute_scalar_features(ctx.scalars, p, prefix);
        require(S.dim(0) == B, "basic_block_forward: scalar batch ", S.dim(0), " vs input batch ", B);
        if (cfg.has_guidance()) {
            require(ctx.guidance.defined(), "basic_block_forward: guidance required for source ",
                    to_string(cfg.guidance));
            G = compute_guidance_features(ctx.guidance, H, W, p, prefix);
        }
    }

    Tensor<T> xin = x;
    if (cfg.integration == IntegrationMode::addition) {
        xin = G.defined() ? add(add(x, G), S) : add(x, S);
    } else if (cfg.integration == IntegrationMode::concatenation) {
        xin = G.defined() ? detail::conv_named(concat_channels<T>({x, G}), p, prefix + ".proj") : x;
        xin = add(xin, S);
    }

    auto h = apply_norm(xin, cfg, p, prefix + ".norm1");
    h = apply_activation(detail::conv_named(h, p, prefix + ".conv1"), cfg.activation);
    h = apply_norm(h, cfg, p, prefix + ".norm2");

    if (cfg.integration == IntegrationMode::akgm) {
        Tensor<T> M;
        if (G.defined()) {
            M = fuse_weights(G, S, cfg.softmax_fusion);
        } else {
            const auto ones = Tensor<T>::full(Shape{B, cfg.bases, H, W}, T(1));
            M = fuse_weights(ones, S, cfg.softmax_fusion);
        }
        KernelBases<T> kb(p.at(prefix + ".akgm.bases"));
        return add(x, akgm_dynamic_conv(h, kb, M));
    }
    if (cfg.integration == IntegrationMode::adain) {
        const std::size_t C = cfg.channels;
        auto mod = G.defined() ? add(nn::spatial_mean(G), S) : S;
        auto gamma = slice_channels(mod, 0, C);
        auto beta = slice_channels(mod, C, 2 * C);
        h = add(add(h, mul(h, gamma)), beta);
    }
    return add(x, detail::conv_named(h, p, prefix + ".conv2"));
}

} // namespace condiff::conditioning
