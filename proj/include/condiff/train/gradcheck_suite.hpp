#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "condiff/conditioning/akgm.hpp"
#include "condiff/conditioning/block.hpp"
#include "condiff/diffusion/process.hpp"
#include "condiff/networks/predictor.hpp"
#include "condiff/networks/unet.hpp"
#include "condiff/nn/layers.hpp"
#include "condiff/tensor/conv.hpp"
#include "condiff/tensor/gradcheck.hpp"

namespace condiff::train {

struct GradCase {
    std::string name;
    DiffFunction fn;
    std::vector<Tensor<double>> inputs;
};

struct GradCaseResult {
    std::string name;
    GradCheckResult result;
};

inline constexpr double kGradTolerance = 1e-4;

namespace detail {

inline Tensor<double> rand_t(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(numel(s));
    for (auto& e : v) e = rng.uniform(lo, hi);
    return Tensor<double>(s, std::move(v));
}

/// Values bounded away from zero, for kinked ops.
inline Tensor<double> rand_away(const Shape& s, Rng& rng) {
    std::vector<double> v(numel(s));
    for (auto& e : v) e = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
    return Tensor<double>(s, std::move(v));
}

/// [B,C,H,W] noise around per-channel offsets spread over [-1.5, 1.5], so every pixel
/// has a well-separated channel profile (normalization layers stay well conditioned).
inline Tensor<double> rand_spread(const Shape& s, Rng& rng) {
    std::vector<double> v(numel(s));
    const std::size_t C = s[1], HW = s[2] * s[3];
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t c = (i / HW) % C;
        const double offset = C > 1 ? -1.5 + 3.0 * static_cast<double>(c) / static_cast<double>(C - 1) : 0.0;
        v[i] = offset + rng.uniform(-0.3, 0.3);
    }
    return Tensor<double>(s, std::move(v));
}

/// Case over a parameter store: inputs are the extra tensors followed by every parameter.
template <class F>
GradCase store_case(std::string name, const nn::ParamSpecs& specs, std::vector<Tensor<double>> extra, F body,
                    std::uint64_t seed) {
    auto store = nn::init_params<double>(specs, seed);
    // Perturb zero-initialized entries so every path carries gradient.
    Rng rng(seed + 17);
    std::vector<std::string> names;
    std::vector<Tensor<double>> inputs = extra;
    for (const auto& e : store.entries()) {
        names.push_back(e.name);
        auto t = e.tensor;
        std::vector<double> v = t.vec();
        for (auto& x : v) x += rng.uniform(-0.1, 0.1);
        inputs.push_back(Tensor<double>(t.shape(), std::move(v)));
    }
    const std::size_t n_extra = extra.size();
    DiffFunction fn = [names, n_extra, body](const std::vector<Tensor<double>>& in) {
        nn::ParamStore<double> p;
        for (std::size_t i = 0; i < names.size(); ++i) p.add(names[i], in[n_extra + i]);
        return body(in, p);
    };
    return {std::move(name), std::move(fn), std::move(inputs)};
}

} // namespace detail

/// Every differentiable operation, the conditioning block in each mode, the predictor
/// and a reduced UNet end to end. All in 64-bit.
inline std::vector<GradCase> gradcheck_cases(std::uint64_t seed = 2024) {
    using detail::rand_away;
    using detail::rand_t;
    using T = double;
    Rng rng(seed);
    std::vector<GradCase> cases;
    auto unary = [&](std::string name, std::function<Tensor<T>(const Tensor<T>&)> f, Tensor<T> x) {
        cases.push_back({std::move(name), [f](const std::vector<Tensor<T>>& in) { return f(in[0]); }, {std::move(x)}});
    };
    const Shape s4{2, 3, 4, 5};

    cases.push_back({"add_broadcast", [](const auto& in) { return add(in[0], in[1]); },
                     {rand_t(s4, rng), rand_t({1, 3, 1, 1}, rng)}});
    cases.push_back({"sub", [](const auto& in) { return sub(in[0], in[1]); }, {rand_t(s4, rng), rand_t(s4, rng)}});
    cases.push_back({"mul_broadcast", [](const auto& in) { return mul(in[0], in[1]); },
                     {rand_t(s4, rng), rand_t({2, 1, 4, 5}, rng)}});
    unary("scale", [](const auto& x) { return scale(x, 1.7); }, rand_t(s4, rng));
    unary("add_scalar", [](const auto& x) { return add_scalar(x, -0.3); }, rand_t(s4, rng));
    unary("square", [](const auto& x) { return square(x); }, rand_t(s4, rng));
    unary("abs", [](const auto& x) { return abs(x); }, rand_away(s4, rng));
    unary("sum", [](const auto& x) { return sum(x); }, rand_t(s4, rng));
    unary("mean", [](const auto& x) { return mean(x); }, rand_t(s4, rng));
    unary("reshape", [](const auto& x) { return reshape(x, Shape{6, 20}); }, rand_t(s4, rng));
    cases.push_back({"concat_channels", [](const auto& in) { return concat_channels<T>({in[0], in[1]}); },
                     {rand_t(s4, rng), rand_t({2, 2, 4, 5}, rng)}});
    cases.push_back({"concat_batch", [](const auto& in) { return concat<T>({in[0], in[1]}, 0); },
                     {rand_t(s4, rng), rand_t({1, 3, 4, 5}, rng)}});
    unary("slice_channels", [](const auto& x) { return slice_channels(x, 1, 3); }, rand_t(s4, rng));
    unary("crop", [](const auto& x) { return crop(x, 1, 2, 2, 3); }, rand_t(s4, rng));
    unary("pad", [](const auto& x) { return pad(x, 1, 2, 0, 1); }, rand_t(s4, rng));

    auto conv_case = [&](std::string name, std::size_t cin, std::size_t cout, std::size_t k, Conv2dOptions o,
                         bool bias) {
        std::vector<Tensor<T>> in{rand_t({2, cin, 6, 5}, rng), rand_t({cout, cin / o.groups, k, k}, rng)};
        if (bias) in.push_back(rand_t({cout}, rng));
        cases.push_back({std::move(name),
                         [o, bias](const auto& v) { return conv2d(v[0], v[1], bias ? v[2] : Tensor<T>(), o); },
                         std::move(in)});
    };
    conv_case("conv2d_3x3", 3, 4, 3, {1, 1, 1}, true);
    conv_case("conv2d_1x1_nobias", 4, 2, 1, {1, 0, 1}, false);
    conv_case("conv2d_stride2", 2, 3, 3, {2, 1, 1}, true);
    conv_case("conv2d_grouped", 4, 6, 3, {1, 1, 2}, true);
    conv_case("conv2d_depthwise_5x5", 3, 3, 5, {1, 2, 3}, false);

    unary("swish", [](const auto& x) { return nn::swish(x); }, rand_t(s4, rng, -3, 3));
    unary("relu", [](const auto& x) { return nn::relu(x); }, rand_away(s4, rng));
    unary("sigmoid", [](const auto& x) { return nn::sigmoid(x); }, rand_t(s4, rng, -3, 3));
    unary("softmax_channels", [](const auto& x) { return nn::softmax_channels(x); }, rand_t(s4, rng, -2, 2));
    unary("simple_gate", [](const auto& x) { return nn::simple_gate(x); }, rand_t({2, 4, 3, 3}, rng));
    cases.push_back({"layer_norm", [](const auto& in) { return nn::layer_norm_channels(in[0], in[1], in[2]); },
                     {detail::rand_spread({2, 4, 3, 3}, rng), rand_t({4}, rng, 0.5, 1.5), rand_t({4}, rng)}});
    cases.push_back({"group_norm", [](const auto& in) { return nn::group_norm_channels(in[0], 2, in[1], in[2]); },
                     {detail::rand_spread({2, 4, 3, 3}, rng), rand_t({4}, rng, 0.5, 1.5), rand_t({4}, rng)}});
    cases.push_back({"linear", [](const auto& in) { return nn::linear(in[0], in[1], in[2]); },
                     {rand_t({3, 5}, rng), rand_t({4, 5}, rng), rand_t({4}, rng)}});
    unary("nearest_upsample2x", [](const auto& x) { return nn::nearest_upsample2x(x); }, rand_t({1, 2, 3, 3}, rng));
    unary("avg_pool", [](const auto& x) { return nn::avg_pool(x, 2, 3); }, rand_t({1, 2, 4, 6}, rng));
    unary("spatial_mean", [](const auto& x) { return nn::spatial_mean(x); }, rand_t(s4, rng));

    cases.push_back({"akgm_dynamic_conv",
                     [](const auto& in) {
                         return conditioning::akgm_dynamic_conv(in[0], conditioning::KernelBases<T>(in[1]), in[2]);
                     },
                     {rand_t({2, 4, 5, 4}, rng), rand_t({2, 4, 2, 3, 3}, rng), rand_t({2, 2, 5, 4}, rng)}});
    cases.push_back({"noise_loss_l2",
                     [](const auto& in) {
                         return diffusion::noise_loss(in[0], in[1], diffusion::DiffusionConfig::LossNorm::l2);
                     },
                     {rand_t(s4, rng), rand_t(s4, rng)}});
    {
        auto a = rand_t(s4, rng);
        auto d = rand_away(s4, rng);
        cases.push_back({"noise_loss_l1",
                         [](const auto& in) {
                             return diffusion::noise_loss(in[0], in[1], diffusion::DiffusionConfig::LossNorm::l1);
                         },
                         {add(a, d).detach(), a}});
    }

    std::uint64_t case_seed = seed * 31;
    for (auto mode : {conditioning::IntegrationMode::akgm, conditioning::IntegrationMode::addition,
                      conditioning::IntegrationMode::concatenation, conditioning::IntegrationMode::adain}) {
        for (auto norm : {conditioning::NormMode::layer, conditioning::NormMode::group}) {
            conditioning::BlockConfig bc;
            bc.channels = 4;
            bc.bases = 2;
            bc.integration = mode;
            bc.norm = norm;
            bc.scalar_dim = 5;
            nn::ParamSpecs specs;
            conditioning::add_block_specs(specs, "b", bc);
            cases.push_back(detail::store_case(
                "block_" + conditioning::to_string(mode) + "_" + conditioning::to_string(norm), specs,
                {rand_t({2, 4, 4, 4}, rng), rand_t({2, 3, 8, 8}, rng), rand_t({2, 5}, rng)},
                [bc](const std::vector<Tensor<T>>& in, const nn::ParamStore<T>& p) {
                    return conditioning::basic_block_forward(in[0], conditioning::BlockContext<T>{in[1], in[2]}, bc, p,
                                                             "b");
                },
                ++case_seed));
        }
    }
    {
        conditioning::BlockConfig bc;
        bc.channels = 4;
        bc.bases = 2;
        bc.scalar_dim = 5;
        bc.softmax_fusion = true;
        bc.guidance = conditioning::GuidanceSource::none;
        nn::ParamSpecs specs;
        conditioning::add_block_specs(specs, "b", bc);
        cases.push_back(detail::store_case(
            "block_akgm_softmax_unguided", specs, {rand_t({1, 4, 4, 4}, rng), rand_t({1, 5}, rng)},
            [bc](const std::vector<Tensor<T>>& in, const nn::ParamStore<T>& p) {
                return conditioning::basic_block_forward(in[0], conditioning::BlockContext<T>{Tensor<T>(), in[1]}, bc,
                                                         p, "b");
            },
            ++case_seed));
    }
    {
        networks::PredictorConfig pc{2, 2, 1};
        cases.push_back(detail::store_case(
            "initial_predictor", networks::predictor_specs(pc), {rand_t({1, 3, 4, 4}, rng)},
            [pc](const std::vector<Tensor<T>>& in, const nn::ParamStore<T>& p) {
                return networks::initial_predictor_forward(in[0], pc, p);
            },
            ++case_seed));
    }
    {
        networks::UNetConfig uc;
        uc.base_channels = 4;
        uc.num_stages = 2;
        uc.blocks_per_stage = 1;
        uc.bases = 2;
        const auto scalars = networks::scalar_condition<T>({0.3}, {{1, 0, 0, 0.2f, 0, 0, 0, 0}});
        cases.push_back(detail::store_case(
            "unet_end_to_end", networks::unet_specs(uc),
            {rand_t({1, 3, 4, 4}, rng), rand_t({1, 3, 4, 4}, rng), rand_t({1, 3, 4, 4}, rng), scalars},
            [uc](const std::vector<Tensor<T>>& in, const nn::ParamStore<T>& p) {
                return networks::diffusion_unet_forward(in[0], in[1], in[2], in[3], uc, p);
            },
            ++case_seed));
    }
    return cases;
}

inline std::vector<GradCaseResult> run_gradcheck_suite(std::uint64_t seed = 2024) {
    std::vector<GradCaseResult> out;
    for (const auto& c : gradcheck_cases(seed)) out.push_back({c.name, finite_diff_check_detailed(c.fn, c.inputs)});
    return out;
}

} // namespace condiff::train
