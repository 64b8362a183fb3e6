#pragma once

#include <cstddef>
#include <string>

#include "condiff/conditioning/block.hpp"
#include "condiff/networks/embedding.hpp"

namespace condiff::networks {

using conditioning::ActivationMode;
using conditioning::GuidanceSource;
using conditioning::IntegrationMode;
using conditioning::NormMode;

struct UNetConfig {
    std::size_t base_channels = 32;
    std::size_t num_stages = 3;
    std::size_t blocks_per_stage = 2;
    std::size_t channel_multiplier = 2;
    std::size_t bases = 4;
    std::size_t kernel = 3;
    std::size_t scalar_dim = kScalarDim;
    IntegrationMode integration = IntegrationMode::akgm;
    NormMode norm = NormMode::layer;
    ActivationMode activation = ActivationMode::swish;
    GuidanceSource guidance = GuidanceSource::initial_predictor;
    bool softmax_fusion = false;

    /// 64 channels, five stages, two blocks per stage.
    static UNetConfig full() {
        UNetConfig c;
        c.base_channels = 64;
        c.num_stages = 5;
        return c;
    }

    std::size_t channels(std::size_t stage) const {
        std::size_t c = base_channels;
        for (std::size_t s = 0; s < stage; ++s) c *= channel_multiplier;
        return c;
    }

    std::size_t divisor() const { return std::size_t(1) << (num_stages - 1); }

    std::size_t guidance_channels() const {
        return guidance == GuidanceSource::internal_feature ? base_channels : 3;
    }

    conditioning::BlockConfig block(std::size_t stage) const {
        conditioning::BlockConfig b;
        b.channels = channels(stage);
        b.bases = bases;
        b.kernel = kernel;
        b.integration = integration;
        b.norm = norm;
        b.activation = activation;
        b.guidance = guidance;
        b.guidance_channels = guidance_channels();
        b.scalar_dim = scalar_dim;
        b.softmax_fusion = softmax_fusion;
        return b;
    }

    void validate() const {
        require(num_stages >= 1 && num_stages <= 8, "UNetConfig: num_stages ", num_stages, " outside [1, 8]");
        require(base_channels >= 1 && blocks_per_stage >= 1 && channel_multiplier >= 1,
                "UNetConfig: base_channels, blocks_per_stage and channel_multiplier must be positive");
        for (std::size_t s = 0; s < num_stages; ++s) block(s).validate();
    }
};

struct PredictorConfig {
    std::size_t base_channels = 16;
    std::size_t num_stages = 3;
    std::size_t blocks_per_stage = 2;

    std::size_t channels(std::size_t stage) const { return base_channels << stage; }
    std::size_t divisor() const { return std::size_t(1) << (num_stages - 1); }
};

inline void check_divisible(std::size_t H, std::size_t W, std::size_t divisor, const char* who) {
    require(H % divisor == 0 && W % divisor == 0, who, ": spatial dims ", H, "x", W,
            " must be divisible by ", divisor);
}

} // namespace condiff::networks
