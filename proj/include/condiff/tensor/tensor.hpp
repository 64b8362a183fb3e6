#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "condiff/core/error.hpp"

namespace condiff {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <class T>
class Tensor;

/// Handed to a backward closure. `grad(i)` returns the accumulation buffer for the
/// i-th recorded input, or an empty span if that input does not need a gradient.
template <class T>
class GradSink {
public:
    virtual ~GradSink() = default;
    virtual std::span<T> grad(std::size_t input) = 0;
};

template <class T>
using BackwardFn = std::function<void(std::span<const T> grad_out, GradSink<T>& sink)>;

namespace detail {

template <class T>
struct Node {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn<T> backward;
};

} // namespace detail

/// Dense row-major array in (batch, channel, height, width) order for images.
/// A Tensor is a shared handle; its values never change after creation except for
/// leaf parameters updated in place by an optimizer step.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
        : node_(std::make_shared<detail::Node<T>>()) {
        require(numel(shape) == data.size(), "Tensor: shape ", shape_str(shape), " holds ",
                numel(shape), " values but data has ", data.size());
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        const auto n = numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }
    std::span<const T> data() const { return node_->data; }
    const std::vector<T>& vec() const& { return node_->data; }
    /// Copy for temporaries, so `for (v : f().vec())` does not dangle.
    std::vector<T> vec() const&& { return node_->data; }
    T item() const {
        require(size() == 1, "Tensor::item: tensor has ", size(), " elements");
        return node_->data[0];
    }
    T operator[](std::size_t i) const { return node_->data[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return !node_->backward; }
    const std::string& op() const { return node_->op; }

    /// Same values, no graph history, no gradient tracking.
    Tensor detach() const { return Tensor(node_->shape, node_->data, false); }

    /// In-place update of a leaf's values (optimizer steps and parameter loading only).
    std::span<T> mutable_leaf_data() {
        require(is_leaf(), "mutable_leaf_data: tensor produced by '", node_->op, "' is not a leaf");
        return node_->data;
    }

    const detail::Node<T>* id() const noexcept { return node_.get(); }
    const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

    template <class U>
    Tensor<U> cast(bool requires_grad) const {
        std::vector<U> out(node_->data.begin(), node_->data.end());
        return Tensor<U>(node_->shape, std::move(out), requires_grad);
    }

private:
    std::shared_ptr<detail::Node<T>> node_;
};

template <class T>
void check_finite(std::span<const T> values, const std::string& op) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError(detail::concat_message("non-finite value produced by '", op,
                                                      "' at flat index ", i));
        }
    }
}

/// Wraps a freshly computed output. The node joins the graph only if some input
/// requires a gradient; otherwise the backward closure and inputs are dropped.
template <class T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& inputs, BackwardFn<T> backward) {
    check_finite<T>(data, op);
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    Tensor<T> out(std::move(shape), std::move(data), needs);
    auto& node = const_cast<detail::Node<T>&>(*out.node());
    node.op = std::move(op);
    if (needs) {
        node.inputs.reserve(inputs.size());
        for (const auto& in : inputs) node.inputs.push_back(in.node());
        node.backward = std::move(backward);
    }
    return out;
}

} // namespace condiff
