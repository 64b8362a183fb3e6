#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "condiff/core/rng.hpp"
#include "condiff/tensor/tensor.hpp"

namespace condiff::nn {

enum class Init { fan_in_uniform, zeros, ones };

/// Declaration of one learnable tensor: name, shape and how to initialize it.
struct ParamSpec {
    std::string name;
    Shape shape;
    Init init = Init::fan_in_uniform;
    std::size_t fan_in = 0;
};

using ParamSpecs = std::vector<ParamSpec>;

/// Half-width of the fan-in scaled uniform draw: He initialization,
/// std = sqrt(2 / fan_in).
inline double fan_in_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

/// Ordered name -> tensor map. Order is declaration order and is what
/// checkpoints, optimizers and EMA iterate over.
template <class T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> tensor;
        bool trainable = true;
    };

    void add(std::string name, Tensor<T> tensor, bool trainable = true) {
        require(!index_.count(name), "ParamStore: duplicate parameter name '", name, "'");
        index_.emplace(name, entries_.size());
        entries_.push_back(Entry{std::move(name), std::move(tensor), trainable});
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const Tensor<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) fail_precondition("ParamStore: no parameter named '", name, "'");
        return entries_[it->second].tensor;
    }

    Tensor<T>& at_mut(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) fail_precondition("ParamStore: no parameter named '", name, "'");
        return entries_[it->second].tensor;
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::size_t parameter_count(bool trainable_only = false) const {
        std::size_t n = 0;
        for (const auto& e : entries_) {
            if (!trainable_only || e.trainable) n += e.tensor.size();
        }
        return n;
    }

    /// Parameters whose names start with `prefix`.
    std::size_t parameter_count_with_prefix(const std::string& prefix) const {
        std::size_t n = 0;
        for (const auto& e : entries_) {
            if (e.name.rfind(prefix, 0) == 0) n += e.tensor.size();
        }
        return n;
    }

    /// Deep copy in precision U. Trainable entries track gradients iff `track_grad`.
    template <class U>
    ParamStore<U> cast(bool track_grad) const {
        ParamStore<U> out;
        for (const auto& e : entries_) {
            out.add(e.name, e.tensor.template cast<U>(track_grad && e.trainable), e.trainable);
        }
        return out;
    }

    ParamStore copy(bool track_grad) const { return cast<T>(track_grad); }

    /// Adds every entry of `other` under `prefix`.
    void merge(const ParamStore& other, const std::string& prefix, bool trainable) {
        for (const auto& e : other.entries()) add(prefix + e.name, e.tensor, trainable);
    }

    /// Entries under `prefix`, with the prefix stripped.
    ParamStore subset(const std::string& prefix) const {
        ParamStore out;
        for (const auto& e : entries_) {
            if (e.name.rfind(prefix, 0) == 0) out.add(e.name.substr(prefix.size()), e.tensor, e.trainable);
        }
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Materializes `specs` in order from a single seeded stream.
template <class T>
ParamStore<T> init_params(const ParamSpecs& specs, std::uint64_t seed, bool track_grad = false) {
    Rng rng(seed);
    ParamStore<T> store;
    for (const auto& spec : specs) {
        std::vector<T> data(numel(spec.shape));
        switch (spec.init) {
        case Init::zeros:
            std::fill(data.begin(), data.end(), T(0));
            break;
        case Init::ones:
            std::fill(data.begin(), data.end(), T(1));
            break;
        case Init::fan_in_uniform: {
            require(spec.fan_in > 0, "init_params: '", spec.name, "' has zero fan-in");
            const double bound = fan_in_bound(spec.fan_in);
            for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
            break;
        }
        }
        store.add(spec.name, Tensor<T>(spec.shape, std::move(data), track_grad));
    }
    return store;
}

inline void add_conv_specs(ParamSpecs& specs, const std::string& name, std::size_t cout,
                           std::size_t cin_per_group, std::size_t k, bool bias = true,
                           Init init = Init::fan_in_uniform) {
    specs.push_back({name + ".weight", Shape{cout, cin_per_group, k, k}, init, cin_per_group * k * k});
    if (bias) specs.push_back({name + ".bias", Shape{cout}, Init::zeros, 0});
}

inline void add_linear_specs(ParamSpecs& specs, const std::string& name, std::size_t dout,
                             std::size_t din) {
    specs.push_back({name + ".weight", Shape{dout, din}, Init::fan_in_uniform, din});
    specs.push_back({name + ".bias", Shape{dout}, Init::zeros, 0});
}

inline void add_norm_specs(ParamSpecs& specs, const std::string& name, std::size_t channels) {
    specs.push_back({name + ".scale", Shape{channels}, Init::ones, 0});
    specs.push_back({name + ".shift", Shape{channels}, Init::zeros, 0});
}

inline std::size_t count_params(const ParamSpecs& specs) {
    std::size_t n = 0;
    for (const auto& s : specs) n += numel(s.shape);
    return n;
}

} // namespace condiff::nn
