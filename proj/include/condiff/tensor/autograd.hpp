#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "condiff/tensor/tensor.hpp"

namespace condiff {

/// Topologically ordered record of the operations that produced a tensor.
/// Only nodes on a gradient-carrying path are recorded.
template <class T>
class DiffGraph {
public:
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    static DiffGraph trace(const Tensor<T>& root) {
        DiffGraph g;
        if (!root.defined() || !root.requires_grad()) return g;
        std::unordered_set<const detail::Node<T>*> seen;
        // iterative post-order DFS; graphs from deep UNets overflow recursion quickly
        std::vector<std::pair<NodePtr, std::size_t>> stack;
        stack.emplace_back(root.node(), 0);
        seen.insert(root.id());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                NodePtr child = node->inputs[next++];
                if (child->requires_grad && seen.insert(child.get()).second) {
                    stack.emplace_back(std::move(child), 0);
                }
            } else {
                g.order_.push_back(node);
                stack.pop_back();
            }
        }
        return g;
    }

    /// Nodes in execution order: every node appears after all of its inputs.
    const std::vector<NodePtr>& order() const { return order_; }
    std::size_t size() const { return order_.size(); }

    std::vector<std::string> op_names() const {
        std::vector<std::string> names;
        for (const auto& n : order_) names.push_back(n->op);
        return names;
    }

private:
    std::vector<NodePtr> order_;
};

/// Gradients of a scalar with respect to the leaves that require them.
template <class T>
class Gradients {
public:
    /// nullopt for detached tensors and for tracked leaves the loss never reached.
    std::optional<Tensor<T>> get(const Tensor<T>& t) const {
        auto it = grads_.find(t.id());
        if (it == grads_.end()) return std::nullopt;
        return Tensor<T>(t.shape(), it->second);
    }

    Tensor<T> get_or_zero(const Tensor<T>& t) const {
        if (auto g = get(t)) return *g;
        return Tensor<T>::zeros(t.shape());
    }

    const std::vector<T>* raw(const Tensor<T>& t) const {
        auto it = grads_.find(t.id());
        return it == grads_.end() ? nullptr : &it->second;
    }

    bool contains(const Tensor<T>& t) const { return grads_.count(t.id()) != 0; }
    std::size_t size() const { return grads_.size(); }

private:
    template <class U>
    friend Gradients<U> backward(const Tensor<U>& loss, const DiffGraph<U>& graph);

    std::unordered_map<const detail::Node<T>*, std::vector<T>> grads_;
};

namespace detail {

template <class T>
class MapGradSink final : public GradSink<T> {
public:
    MapGradSink(std::unordered_map<const Node<T>*, std::vector<T>>& store) : store_(store) {}
    void bind(const Node<T>* node) { node_ = node; }

    std::span<T> grad(std::size_t input) override {
        const auto& in = node_->inputs.at(input);
        if (!in->requires_grad) return {};
        auto& buf = store_[in.get()];
        if (buf.empty()) buf.assign(in->data.size(), T(0));
        return buf;
    }

private:
    std::unordered_map<const Node<T>*, std::vector<T>>& store_;
    const Node<T>* node_ = nullptr;
};

} // namespace detail

/// Reverse-mode pass over `graph`, seeded with d(loss)/d(loss) = 1.
template <class T>
Gradients<T> backward(const Tensor<T>& loss, const DiffGraph<T>& graph) {
    require(loss.defined() && loss.size() == 1, "backward: loss must be a scalar, got shape ",
            loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>"));
    Gradients<T> result;
    if (!loss.requires_grad()) return result;

    std::unordered_map<const detail::Node<T>*, std::vector<T>> work;
    work[loss.id()] = std::vector<T>{T(1)};
    detail::MapGradSink<T> sink(work);

    const auto& order = graph.order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const auto* node = it->get();
        auto found = work.find(node);
        if (found == work.end()) continue;
        if (!node->backward) {
            result.grads_[node] = std::move(found->second);
            work.erase(found);
            continue;
        }
        std::vector<T> gout = std::move(found->second);
        work.erase(found);
        sink.bind(node);
        node->backward(gout, sink);
    }
    return result;
}

template <class T>
Gradients<T> backward(const Tensor<T>& loss) {
    return backward(loss, DiffGraph<T>::trace(loss));
}

} // namespace condiff
