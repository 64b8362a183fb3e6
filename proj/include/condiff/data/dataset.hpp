#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "condiff/data/degradations.hpp"
#include "condiff/data/png.hpp"
#include "condiff/tensor/ops.hpp"

namespace condiff::data {

/// Degraded/clean pairs in [0, 1], each [1,3,crop,crop].
struct PairedDataset {
    std::vector<Tensor<float>> x;
    std::vector<Tensor<float>> y;
    std::vector<DegradationSpec> specs;
    std::size_t crop = 0;

    std::size_t size() const { return y.size(); }
};

/// [0,1] -> [-1,1]
inline Tensor<float> to_model_space(const Tensor<float>& t) { return add_scalar(scale(t, 2.0f), -1.0f).detach(); }

/// [-1,1] -> [0,1]
inline Tensor<float> from_model_space(const Tensor<float>& t) { return scale(add_scalar(t, 1.0f), 0.5f).detach(); }

/// Stacks [1,C,H,W] tensors into [B,C,H,W].
inline Tensor<float> stack(const std::vector<Tensor<float>>& items) {
    return concat<float>(items, 0).detach();
}

/// Row `b` of a batch as [1,C,H,W].
inline Tensor<float> unstack(const Tensor<float>& batch, std::size_t b) {
    return slice(batch, 0, b, b + 1).detach();
}

/// `count` deterministic random crops, each degraded by its spec. Sources smaller than
/// the crop are skipped with a warning.
inline PairedDataset build_dataset(const std::vector<Tensor<float>>& sources, const std::vector<DegradationSpec>& specs,
                                   std::size_t crop, std::size_t count, std::uint64_t seed, std::size_t divisor = 1) {
    require(crop >= 1 && divisor >= 1 && crop % divisor == 0, "build_dataset: crop ", crop,
            " must be divisible by ", divisor);
    require(!specs.empty() && (specs.size() == 1 || specs.size() == sources.size()),
            "build_dataset: need one spec or one per source, got ", specs.size());
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto& s = sources[i];
        require(s.rank() == 4 && s.dim(0) == 1, "build_dataset: source ", i, " must be [1,C,H,W]");
        if (s.dim(2) < crop || s.dim(3) < crop) {
            std::cerr << "warning: build_dataset: source " << i << " (" << s.dim(2) << "x" << s.dim(3)
                      << ") is smaller than crop " << crop << ", skipped\n";
        } else {
            usable.push_back(i);
        }
    }
    require(!usable.empty(), "build_dataset: every source image is smaller than the crop size ", crop);
    Rng rng(seed);
    PairedDataset ds;
    ds.crop = crop;
    for (std::size_t n = 0; n < count; ++n) {
        const std::size_t idx = usable[rng.below(usable.size())];
        const auto src = to_rgb(sources[idx]);
        const std::size_t top = rng.below(src.dim(2) - crop + 1), left = rng.below(src.dim(3) - crop + 1);
        auto y = condiff::crop(src, top, left, crop, crop).detach();
        const auto& spec = specs.size() == 1 ? specs[0] : specs[idx];
        ds.x.push_back(apply_degradation(y, spec, rng));
        ds.y.push_back(std::move(y));
        ds.specs.push_back(spec);
    }
    return ds;
}

inline PairedDataset build_dataset(const std::vector<Tensor<float>>& sources, const DegradationSpec& spec,
                                   std::size_t crop, std::size_t count, std::uint64_t seed, std::size_t divisor = 1) {
    return build_dataset(sources, std::vector<DegradationSpec>{spec}, crop, count, seed, divisor);
}

struct ManifestRow {
    std::string clean_path;
    DegradationSpec spec;
};

/// Rows "clean_path spec_kind param1 param2 ..."; blank lines and '#' comments are skipped.
/// Relative paths resolve against the manifest's directory.
inline std::vector<ManifestRow> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("read_manifest: cannot open " + path);
    const auto base = std::filesystem::path(path).parent_path();
    std::vector<ManifestRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::vector<std::string> fields;
        for (std::string f; ss >> f;) fields.push_back(f);
        if (fields.empty()) continue;
        if (fields.size() < 2) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected 'clean_path kind params...'");
        }
        ManifestRow row;
        auto p = std::filesystem::path(fields[0]);
        row.clean_path = p.is_absolute() ? p.string() : (base / p).string();
        try {
            row.spec = DegradationSpec::parse(std::vector<std::string>(fields.begin() + 1, fields.end()));
        } catch (const PreconditionError& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline PairedDataset build_dataset_from_manifest(const std::string& manifest, std::size_t crop, std::size_t count,
                                                 std::uint64_t seed, std::size_t divisor = 1) {
    const auto rows = read_manifest(manifest);
    require(!rows.empty(), "build_dataset_from_manifest: ", manifest, " lists no images");
    std::vector<Tensor<float>> sources;
    std::vector<DegradationSpec> specs;
    for (const auto& r : rows) {
        sources.push_back(load_png(r.clean_path));
        specs.push_back(r.spec);
    }
    if (specs.size() == 1) return build_dataset(sources, specs[0], crop, count, seed, divisor);
    return build_dataset(sources, specs, crop, count, seed, divisor);
}

} // namespace condiff::data
