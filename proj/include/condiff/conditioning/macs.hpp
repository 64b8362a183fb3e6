#pragma once

#include <cstdint>
#include <string>

#include "condiff/core/error.hpp"

namespace condiff::conditioning {

enum class LayerKind { conv, grouped_conv, akgm_full, akgm_grouped, linear };

inline std::string to_string(LayerKind k) {
    switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::grouped_conv: return "grouped_conv";
    case LayerKind::akgm_full: return "akgm_full";
    case LayerKind::akgm_grouped: return "akgm_grouped";
    case LayerKind::linear: return "linear";
    }
    return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
    for (auto k : {LayerKind::conv, LayerKind::grouped_conv, LayerKind::akgm_full, LayerKind::akgm_grouped,
                   LayerKind::linear}) {
        if (to_string(k) == s) return k;
    }
    fail_precondition("unknown layer kind '", s, "'");
}

/// One layer for MAC accounting. H, W are output spatial dims.
/// For linear layers cin/cout are Din/Dout and H = W = 1.
struct LayerDesc {
    LayerKind kind = LayerKind::conv;
    std::uint64_t H = 1, W = 1;
    std::uint64_t cin = 1, cout = 1;
    std::uint64_t k = 1;
    std::uint64_t groups = 1;
    std::uint64_t bases = 1;
};

/// Multiply-accumulate count:
///   conv          HW k^2 Cin Cout / groups   (HW k^2 C^2 for square layers)
///   akgm_full     HW N C^2 k^2 + N C^2 k^2
///   akgm_grouped  HW C^2 k^2 + C^2 k^2
inline std::uint64_t count_macs(const LayerDesc& d) {
    require(d.H >= 1 && d.W >= 1 && d.cin >= 1 && d.cout >= 1 && d.k >= 1, "count_macs: empty layer");
    const std::uint64_t HW = d.H * d.W, k2 = d.k * d.k;
    switch (d.kind) {
    case LayerKind::conv:
        return HW * k2 * d.cin * d.cout;
    case LayerKind::grouped_conv:
        require(d.groups >= 1 && d.cin % d.groups == 0 && d.cout % d.groups == 0, "count_macs: groups ",
                d.groups, " do not divide channels ", d.cin, "/", d.cout);
        return HW * k2 * d.cin * d.cout / d.groups;
    case LayerKind::akgm_full: {
        require(d.cin == d.cout, "count_macs: AKGM layers are square");
        const std::uint64_t fuse = d.bases * d.cin * d.cin * k2;
        return HW * fuse + fuse;
    }
    case LayerKind::akgm_grouped: {
        require(d.cin == d.cout, "count_macs: AKGM layers are square");
        require(d.bases >= 1 && d.cin % d.bases == 0, "count_macs: base count ", d.bases,
                " does not divide ", d.cin);
        const std::uint64_t fuse = d.cin * d.cin * k2;
        return HW * fuse + fuse;
    }
    case LayerKind::linear:
        return HW * d.cin * d.cout;
    }
    fail_precondition("count_macs: unknown layer kind");
}

} // namespace condiff::conditioning
