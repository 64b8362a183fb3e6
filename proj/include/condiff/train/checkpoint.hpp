#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "condiff/core/rng.hpp"
#include "condiff/nn/params.hpp"
#include "condiff/train/optim.hpp"

namespace condiff::train {

inline constexpr int kCheckpointVersion = 1;

/// Training state. The frozen predictor of a diffusion run travels in `params`
/// under "predictor." as non-trainable entries.
struct Checkpoint {
    std::string kind;        ///< predictor | diffusion | regression
    std::string config_text; ///< canonical RunConfig text
    std::uint64_t iteration = 0;
    bool has_smoothed = false;
    double smoothed_loss = 0.0;
    std::string rng_state;
    nn::ParamStore<float> params;
    EMAState<float> ema;
    OptimState<float> optim;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

template <class U>
U to_le(U v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(U)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<U>(bytes);
    }
    return v;
}

class BinWriter {
public:
    explicit BinWriter(std::string& out) : out_(out) {}
    template <class U>
    void put(U v) {
        v = to_le(v);
        out_.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
    void str(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void floats(const std::vector<float>& v) {
        put<std::uint64_t>(v.size());
        for (float f : v) put(f);
    }

private:
    std::string& out_;
};

class BinReader {
public:
    BinReader(const std::string& in, std::size_t pos) : in_(in), pos_(pos) {}
    template <class U>
    U get() {
        if (pos_ + sizeof(U) > in_.size()) throw FormatError("checkpoint: truncated binary section");
        U v;
        std::memcpy(&v, in_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return to_le(v);
    }
    std::string str() {
        const auto n = get<std::uint32_t>();
        if (pos_ + n > in_.size()) throw FormatError("checkpoint: truncated string");
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<float> floats() {
        const auto n = get<std::uint64_t>();
        if (n > (in_.size() - pos_) / sizeof(float)) throw FormatError("checkpoint: truncated array");
        std::vector<float> v(n);
        for (auto& f : v) f = get<float>();
        return v;
    }
    void tag(const char* expected) {
        if (str() != expected) throw FormatError(std::string("checkpoint: expected section '") + expected + "'");
    }
    bool done() const { return pos_ == in_.size(); }

private:
    const std::string& in_;
    std::size_t pos_;
};

inline void write_store(BinWriter& w, const nn::ParamStore<float>& s) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    for (const auto& e : s.entries()) {
        w.str(e.name);
        w.put<std::uint8_t>(e.trainable ? 1 : 0);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(e.tensor.rank()));
        for (auto d : e.tensor.shape()) w.put<std::uint64_t>(d);
        w.floats(e.tensor.vec());
    }
}

inline nn::ParamStore<float> read_store(BinReader& r) {
    nn::ParamStore<float> s;
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
        auto name = r.str();
        const bool trainable = r.get<std::uint8_t>() != 0;
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw FormatError("checkpoint: parameter '" + name + "' has rank " + std::to_string(rank));
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
        auto data = r.floats();
        if (data.size() != numel(shape)) {
            throw FormatError("checkpoint: parameter '" + name + "' size does not match its shape");
        }
        s.add(std::move(name), Tensor<float>(shape, std::move(data), false), trainable);
    }
    return s;
}

} // namespace detail

/// Text header, then little-endian binary sections:
///   CONDIFF-CKPT 1
///   kind <kind>
///   digest <fnv1a of config, hex>
///   iteration <n>
///   smoothed <hexfloat | none>
///   ema_decay <hexfloat>
///   rng <state>
///   config <byte count>
///   <config bytes>
///   END
///   params | ema | optim sections
inline std::string serialize_checkpoint(const Checkpoint& c) {
    char buf[64];
    std::string out = "CONDIFF-CKPT " + std::to_string(kCheckpointVersion) + "\n";
    out += "kind " + c.kind + "\n";
    out += "digest " + detail::hex64(detail::fnv1a(c.config_text)) + "\n";
    out += "iteration " + std::to_string(c.iteration) + "\n";
    if (c.has_smoothed) {
        std::snprintf(buf, sizeof buf, "%a", c.smoothed_loss);
        out += std::string("smoothed ") + buf + "\n";
    } else {
        out += "smoothed none\n";
    }
    std::snprintf(buf, sizeof buf, "%a", c.ema.decay);
    out += std::string("ema_decay ") + buf + "\n";
    out += "rng " + c.rng_state + "\n";
    out += "config " + std::to_string(c.config_text.size()) + "\n" + c.config_text + "END\n";

    detail::BinWriter w(out);
    w.str("params");
    detail::write_store(w, c.params);
    w.str("ema");
    detail::write_store(w, c.ema.shadow);
    w.str("optim");
    w.put<std::uint64_t>(c.optim.step);
    for (double v : {c.optim.cfg.lr, c.optim.cfg.beta1, c.optim.cfg.beta2, c.optim.cfg.eps, c.optim.cfg.weight_decay}) {
        w.put<double>(v);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.optim.names.size()));
    for (std::size_t k = 0; k < c.optim.names.size(); ++k) {
        w.str(c.optim.names[k]);
        w.floats(c.optim.m[k]);
        w.floats(c.optim.v[k]);
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    std::size_t pos = 0;
    auto line = [&](const char* key) {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw FormatError(std::string("checkpoint: missing '") + key + "' line");
        std::string l = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        const std::string prefix = std::string(key) + " ";
        if (l.rfind(prefix, 0) != 0) throw FormatError("checkpoint: expected '" + std::string(key) + "', got '" + l + "'");
        return l.substr(prefix.size());
    };
    auto hexfloat = [](const std::string& s) {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() + s.size()) throw FormatError("checkpoint: bad number '" + s + "'");
        return v;
    };
    if (line("CONDIFF-CKPT") != std::to_string(kCheckpointVersion)) {
        throw FormatError("checkpoint: unsupported format version");
    }
    Checkpoint c;
    c.kind = line("kind");
    const std::string digest = line("digest");
    c.iteration = std::stoull(line("iteration"));
    const std::string sm = line("smoothed");
    c.has_smoothed = sm != "none";
    if (c.has_smoothed) c.smoothed_loss = hexfloat(sm);
    c.ema.decay = hexfloat(line("ema_decay"));
    c.rng_state = line("rng");
    const std::size_t n = std::stoull(line("config"));
    if (pos + n > bytes.size()) throw FormatError("checkpoint: truncated config");
    c.config_text = bytes.substr(pos, n);
    pos += n;
    if (bytes.compare(pos, 4, "END\n") != 0) throw FormatError("checkpoint: missing END marker");
    pos += 4;
    if (detail::hex64(detail::fnv1a(c.config_text)) != digest) throw FormatError("checkpoint: config digest mismatch");

    detail::BinReader r(bytes, pos);
    r.tag("params");
    c.params = detail::read_store(r);
    r.tag("ema");
    c.ema.shadow = detail::read_store(r);
    r.tag("optim");
    c.optim.step = r.get<std::uint64_t>();
    c.optim.cfg.lr = r.get<double>();
    c.optim.cfg.beta1 = r.get<double>();
    c.optim.cfg.beta2 = r.get<double>();
    c.optim.cfg.eps = r.get<double>();
    c.optim.cfg.weight_decay = r.get<double>();
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < count; ++k) {
        c.optim.names.push_back(r.str());
        c.optim.m.push_back(r.floats());
        c.optim.v.push_back(r.floats());
    }
    if (!r.done()) throw FormatError("checkpoint: trailing bytes");
    return c;
}

/// Writes through a temporary file so an interrupted save never clobbers the previous one.
inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write checkpoint " + tmp);
        const auto bytes = serialize_checkpoint(c);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("write failed for checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return deserialize_checkpoint(ss.str());
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

} // namespace condiff::train
