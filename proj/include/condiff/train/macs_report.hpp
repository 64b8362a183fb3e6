#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "condiff/conditioning/macs.hpp"
#include "condiff/networks/unet.hpp"

namespace condiff::train {

struct MacsRow {
    std::string name;
    conditioning::LayerDesc layer;
    std::uint64_t macs = 0;
};

/// AKGM cost of one block against a standard conv of the same shape.
struct BlockOverhead {
    std::string block;
    std::uint64_t H = 0, W = 0;
    std::uint64_t akgm_macs = 0;
    std::uint64_t conv_macs = 0;

    double ratio() const { return static_cast<double>(akgm_macs) / static_cast<double>(conv_macs); }
    /// akgm / conv == 1 + 1/(HW), checked in integers.
    bool matches_closed_form() const { return akgm_macs * H * W == conv_macs * (H * W + 1); }
};

struct MacsReport {
    std::vector<MacsRow> rows;
    std::vector<BlockOverhead> blocks;

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& r : rows) t += r.macs;
        return t;
    }
};

/// Per-layer MACs of the diffusion UNet for one H x W input (norms and elementwise
/// ops are not counted).
inline MacsReport macs_report(const networks::UNetConfig& cfg, std::uint64_t H, std::uint64_t W) {
    using conditioning::LayerDesc;
    using conditioning::LayerKind;
    cfg.validate();
    networks::check_divisible(H, W, cfg.divisor(), "macs_report");
    MacsReport rep;
    auto add = [&](std::string name, LayerDesc d) {
        const auto m = conditioning::count_macs(d);
        rep.rows.push_back({std::move(name), d, m});
        return m;
    };
    auto conv = [](std::uint64_t h, std::uint64_t w, std::uint64_t cin, std::uint64_t cout, std::uint64_t k) {
        LayerDesc d;
        d.kind = LayerKind::conv;
        d.H = h;
        d.W = w;
        d.cin = cin;
        d.cout = cout;
        d.k = k;
        return d;
    };
    auto linear = [](std::uint64_t din, std::uint64_t dout) {
        LayerDesc d;
        d.kind = LayerKind::linear;
        d.cin = din;
        d.cout = dout;
        return d;
    };
    const std::uint64_t k = cfg.kernel;
    auto block = [&](const std::string& name, std::size_t s) {
        const auto bc = cfg.block(s);
        const std::uint64_t h = H >> s, w = W >> s, C = bc.channels, hid = bc.hidden(), width = bc.cim_width();
        add(name + ".conv1", conv(h, w, C, C, k));
        if (width > 0) {
            if (bc.has_guidance()) {
                add(name + ".cim.guide1", conv(h, w, bc.guidance_channels, 2 * hid, 3));
                add(name + ".cim.guide2", conv(h, w, hid, width, 3));
            }
            add(name + ".cim.scalar1", linear(bc.scalar_dim, hid));
            add(name + ".cim.scalar2", linear(hid, width));
        }
        if (bc.integration == conditioning::IntegrationMode::akgm) {
            LayerDesc d = conv(h, w, C, C, k);
            d.kind = LayerKind::akgm_grouped;
            d.bases = bc.bases;
            const auto m = add(name + ".akgm", d);
            rep.blocks.push_back({name, h, w, m, conditioning::count_macs(conv(h, w, C, C, k))});
        } else {
            if (bc.integration == conditioning::IntegrationMode::concatenation && bc.has_guidance()) {
                add(name + ".proj", conv(h, w, 2 * C, C, 1));
            }
            add(name + ".conv2", conv(h, w, C, C, k));
        }
    };

    const std::size_t S = cfg.num_stages;
    add("conv_in", conv(H, W, 6, cfg.channels(0), k));
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) block(networks::detail::block_name("enc", s, j), s);
        if (s + 1 < S) add("down." + std::to_string(s), conv(H >> (s + 1), W >> (s + 1), cfg.channels(s), cfg.channels(s + 1), k));
    }
    for (std::size_t s = S; s-- > 0;) {
        if (s + 1 < S) {
            add("up." + std::to_string(s), conv(H >> s, W >> s, cfg.channels(s + 1), cfg.channels(s), k));
            add("merge." + std::to_string(s), conv(H >> s, W >> s, 2 * cfg.channels(s), cfg.channels(s), 1));
        }
        for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) block(networks::detail::block_name("dec", s, j), s);
    }
    add("conv_out", conv(H, W, cfg.channels(0), 3, k));
    return rep;
}

/// TSV: layer, kind, H, W, cin, cout, k, macs; then block overheads and the total.
inline void write_macs_report(std::ostream& os, const MacsReport& r) {
    os << "layer\tkind\tH\tW\tcin\tcout\tk\tmacs\n";
    for (const auto& row : r.rows) {
        const auto& d = row.layer;
        os << row.name << '\t' << conditioning::to_string(d.kind) << '\t' << d.H << '\t' << d.W << '\t' << d.cin
           << '\t' << d.cout << '\t' << d.k << '\t' << row.macs << '\n';
    }
    os << "block\tH\tW\takgm_macs\tconv_macs\tratio\n";
    for (const auto& b : r.blocks) {
        os << b.block << '\t' << b.H << '\t' << b.W << '\t' << b.akgm_macs << '\t' << b.conv_macs << '\t' << b.ratio()
           << '\n';
    }
    os << "total\t" << r.total() << '\n';
}

} // namespace condiff::train
