#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "condiff/data/degradations.hpp"
#include "condiff/diffusion/schedule.hpp"
#include "condiff/networks/config.hpp"
#include "condiff/train/optim.hpp"

namespace condiff::train {

/// Everything a run depends on. Serialized as "key = value" lines; see README for
/// the key reference.
struct RunConfig {
    std::uint64_t seed = 1;

    networks::UNetConfig model;
    networks::PredictorConfig predictor;
    diffusion::DiffusionConfig diffusion;

    // data
    std::string data_source = "procedural"; ///< "procedural" or a manifest path
    std::size_t data_images = 64;           ///< procedural source images
    std::size_t data_image_size = 64;       ///< procedural source image side
    std::size_t data_crop = 32;
    std::size_t data_count = 256;
    std::uint64_t data_seed = 7;
    data::DegradationSpec degradation = data::DegradationSpec::lowlight(0.1, 1.0);

    // optimization
    std::size_t iterations = 5000;
    std::size_t batch = 8;
    AdamWConfig adam{5e-4, 0.9, 0.999, 1e-8, 0.0};
    double ema_decay = 0.999;
    double loss_smoothing = 0.98;
    double target_loss = 0.0; ///< stop once the smoothed loss is below this (0 disables)
    std::size_t log_every = 50;
    std::size_t checkpoint_every = 1000;
    std::string train_mode = "strict"; ///< only bitwise-reproducible single-threaded training

    // predictor pretraining
    std::size_t predictor_iterations = 3000;
    double predictor_lr = 2e-3;

    // tiling
    std::size_t tile_size = 128;
    std::size_t tile_overlap = 32;
    std::size_t tile_workers = 1;

    std::string output_dir = "runs/default";

    /// Settings of the full-scale experiments.
    static RunConfig full_scale() {
        RunConfig c;
        c.model = networks::UNetConfig::full();
        c.iterations = 500000;
        c.batch = 32;
        c.adam.lr = 1e-4;
        c.ema_decay = 0.9999;
        return c;
    }
};

namespace detail {

struct ConfigKey {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& key, const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail_precondition("config: '", key, "' expects a number, got '", s, "'");
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        fail_precondition("config: '", key, "' expects a nonnegative integer, got '", s, "'");
    }
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    fail_precondition("config: '", key, "' expects true/false, got '", s, "'");
}

template <class Field>
ConfigKey size_key(std::string name, Field f) {
    return {name, [f](const RunConfig& c) { return std::to_string(f(const_cast<RunConfig&>(c))); },
            [f, name](RunConfig& c, const std::string& s) {
                f(c) = static_cast<std::remove_reference_t<decltype(f(c))>>(parse_uint(name, s));
            }};
}

template <class Field>
ConfigKey double_key(std::string name, Field f) {
    return {name, [f](const RunConfig& c) { return fmt_double(f(const_cast<RunConfig&>(c))); },
            [f, name](RunConfig& c, const std::string& s) { f(c) = parse_double(name, s); }};
}

inline const std::vector<ConfigKey>& config_keys() {
    using namespace conditioning;
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        k.push_back(size_key("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
        k.push_back(size_key("model.base_channels", [](RunConfig& c) -> std::size_t& { return c.model.base_channels; }));
        k.push_back(size_key("model.num_stages", [](RunConfig& c) -> std::size_t& { return c.model.num_stages; }));
        k.push_back(size_key("model.blocks_per_stage", [](RunConfig& c) -> std::size_t& { return c.model.blocks_per_stage; }));
        k.push_back(size_key("model.channel_multiplier",
                             [](RunConfig& c) -> std::size_t& { return c.model.channel_multiplier; }));
        k.push_back(size_key("model.bases", [](RunConfig& c) -> std::size_t& { return c.model.bases; }));
        k.push_back(size_key("model.kernel", [](RunConfig& c) -> std::size_t& { return c.model.kernel; }));
        k.push_back({"model.integration", [](const RunConfig& c) { return to_string(c.model.integration); },
                     [](RunConfig& c, const std::string& s) { c.model.integration = parse_integration_mode(s); }});
        k.push_back({"model.norm", [](const RunConfig& c) { return to_string(c.model.norm); },
                     [](RunConfig& c, const std::string& s) { c.model.norm = parse_norm_mode(s); }});
        k.push_back({"model.activation", [](const RunConfig& c) { return to_string(c.model.activation); },
                     [](RunConfig& c, const std::string& s) { c.model.activation = parse_activation_mode(s); }});
        k.push_back({"model.guidance", [](const RunConfig& c) { return to_string(c.model.guidance); },
                     [](RunConfig& c, const std::string& s) { c.model.guidance = parse_guidance_source(s); }});
        k.push_back({"model.softmax_fusion",
                     [](const RunConfig& c) { return std::string(c.model.softmax_fusion ? "true" : "false"); },
                     [](RunConfig& c, const std::string& s) { c.model.softmax_fusion = parse_bool("model.softmax_fusion", s); }});
        k.push_back(size_key("predictor.base_channels", [](RunConfig& c) -> std::size_t& { return c.predictor.base_channels; }));
        k.push_back(size_key("predictor.num_stages", [](RunConfig& c) -> std::size_t& { return c.predictor.num_stages; }));
        k.push_back(size_key("predictor.blocks_per_stage",
                             [](RunConfig& c) -> std::size_t& { return c.predictor.blocks_per_stage; }));
        k.push_back(size_key("diffusion.train_steps", [](RunConfig& c) -> std::size_t& { return c.diffusion.train_steps; }));
        k.push_back(double_key("diffusion.beta_start", [](RunConfig& c) -> double& { return c.diffusion.beta_start; }));
        k.push_back(double_key("diffusion.beta_end", [](RunConfig& c) -> double& { return c.diffusion.beta_end; }));
        k.push_back(size_key("diffusion.infer_steps", [](RunConfig& c) -> std::size_t& { return c.diffusion.infer_steps; }));
        k.push_back({"diffusion.loss",
                     [](const RunConfig& c) {
                         return std::string(c.diffusion.loss_norm == diffusion::DiffusionConfig::LossNorm::l2 ? "l2" : "l1");
                     },
                     [](RunConfig& c, const std::string& s) {
                         require(s == "l2" || s == "l1", "config: diffusion.loss must be l2 or l1, got '", s, "'");
                         c.diffusion.loss_norm =
                             s == "l2" ? diffusion::DiffusionConfig::LossNorm::l2 : diffusion::DiffusionConfig::LossNorm::l1;
                     }});
        k.push_back(double_key("diffusion.residual_scale", [](RunConfig& c) -> double& { return c.diffusion.residual_scale; }));
        k.push_back({"data.source", [](const RunConfig& c) { return c.data_source; },
                     [](RunConfig& c, const std::string& s) { c.data_source = s; }});
        k.push_back(size_key("data.images", [](RunConfig& c) -> std::size_t& { return c.data_images; }));
        k.push_back(size_key("data.image_size", [](RunConfig& c) -> std::size_t& { return c.data_image_size; }));
        k.push_back(size_key("data.crop", [](RunConfig& c) -> std::size_t& { return c.data_crop; }));
        k.push_back(size_key("data.count", [](RunConfig& c) -> std::size_t& { return c.data_count; }));
        k.push_back(size_key("data.seed", [](RunConfig& c) -> std::uint64_t& { return c.data_seed; }));
        k.push_back({"data.degradation", [](const RunConfig& c) { return c.degradation.describe(); },
                     [](RunConfig& c, const std::string& s) {
                         std::istringstream ss(s);
                         std::vector<std::string> f;
                         for (std::string w; ss >> w;) f.push_back(w);
                         c.degradation = data::DegradationSpec::parse(f);
                     }});
        k.push_back(size_key("train.iterations", [](RunConfig& c) -> std::size_t& { return c.iterations; }));
        k.push_back(size_key("train.batch", [](RunConfig& c) -> std::size_t& { return c.batch; }));
        k.push_back(double_key("train.lr", [](RunConfig& c) -> double& { return c.adam.lr; }));
        k.push_back(double_key("train.beta1", [](RunConfig& c) -> double& { return c.adam.beta1; }));
        k.push_back(double_key("train.beta2", [](RunConfig& c) -> double& { return c.adam.beta2; }));
        k.push_back(double_key("train.eps", [](RunConfig& c) -> double& { return c.adam.eps; }));
        k.push_back(double_key("train.weight_decay", [](RunConfig& c) -> double& { return c.adam.weight_decay; }));
        k.push_back(double_key("train.ema_decay", [](RunConfig& c) -> double& { return c.ema_decay; }));
        k.push_back(double_key("train.loss_smoothing", [](RunConfig& c) -> double& { return c.loss_smoothing; }));
        k.push_back(double_key("train.target_loss", [](RunConfig& c) -> double& { return c.target_loss; }));
        k.push_back(size_key("train.log_every", [](RunConfig& c) -> std::size_t& { return c.log_every; }));
        k.push_back(size_key("train.checkpoint_every", [](RunConfig& c) -> std::size_t& { return c.checkpoint_every; }));
        k.push_back({"train.mode", [](const RunConfig& c) { return c.train_mode; },
                     [](RunConfig& c, const std::string& s) {
                         require(s == "strict", "config: train.mode '", s, "' is not supported (only 'strict')");
                         c.train_mode = s;
                     }});
        k.push_back(size_key("predictor.iterations", [](RunConfig& c) -> std::size_t& { return c.predictor_iterations; }));
        k.push_back(double_key("predictor.lr", [](RunConfig& c) -> double& { return c.predictor_lr; }));
        k.push_back(size_key("tiling.tile", [](RunConfig& c) -> std::size_t& { return c.tile_size; }));
        k.push_back(size_key("tiling.overlap", [](RunConfig& c) -> std::size_t& { return c.tile_overlap; }));
        k.push_back(size_key("tiling.workers", [](RunConfig& c) -> std::size_t& { return c.tile_workers; }));
        k.push_back({"output.dir", [](const RunConfig& c) { return c.output_dir; },
                     [](RunConfig& c, const std::string& s) { c.output_dir = s; }});
        return k;
    }();
    return keys;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace detail

/// Sets one key; unknown keys and malformed values raise PreconditionError.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys()) {
        if (k.name == key) {
            k.set(c, value);
            return;
        }
    }
    fail_precondition("config: unknown key '", key, "'");
}

inline std::string get_config_value(const RunConfig& c, const std::string& key) {
    for (const auto& k : detail::config_keys()) {
        if (k.name == key) return k.get(c);
    }
    fail_precondition("config: unknown key '", key, "'");
}

/// Applies "key = value" assignment text on top of `base`. '#' starts a comment.
inline RunConfig parse_run_config(const std::string& text, RunConfig base = {}) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail_precondition("config line ", lineno, ": expected 'key = value', got '", line, "'");
        }
        try {
            set_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const PreconditionError& e) {
            fail_precondition("config line ", lineno, ": ", e.what());
        }
    }
    return base;
}

inline RunConfig load_run_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), std::move(base));
}

/// Canonical text: every key, fixed order.
inline std::string run_config_text(const RunConfig& c) {
    std::string out;
    for (const auto& k : detail::config_keys()) out += k.name + " = " + k.get(c) + "\n";
    return out;
}

/// 64-bit FNV-1a of the canonical text.
inline std::uint64_t run_config_digest(const RunConfig& c) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : run_config_text(c)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace condiff::train
