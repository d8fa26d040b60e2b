#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "vt/common.hpp"

namespace vt::numkit {

namespace detail {

inline std::atomic<std::uint64_t> g_node_seq{0};

template <class T>
struct Node {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily; non-empty only when gradients flow here
    bool requires_grad = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;  // reads this->grad, accumulates into parents

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T{});
    }
    void accum_grad(const T* g, std::size_t n) {
        ensure_grad();
        for (std::size_t i = 0; i < n; ++i) grad[i] += g[i];
    }
};

inline std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor shape has non-positive dim " + shape_str(shape));
        n *= d;
    }
    return n;
}

}  // namespace detail

// Dense row-major tensor handle with reverse-mode gradients. Copies share the
// underlying node (parameter semantics); forward ops build a tape in creation
// order, and backward() replays it in exact reverse creation order, which makes
// gradient accumulation order fixed and runs bitwise reproducible.
template <class T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return full(std::move(shape), T{}, requires_grad);
    }

    static Tensor full(std::vector<int> shape, T v, bool requires_grad = false) {
        auto numel = detail::shape_numel(shape);
        return from_data(std::vector<T>(static_cast<std::size_t>(numel), v), std::move(shape),
                         requires_grad);
    }

    static Tensor from_data(std::vector<T> data, std::vector<int> shape, bool requires_grad = false) {
        auto numel = detail::shape_numel(shape);
        if (static_cast<std::int64_t>(data.size()) != numel) {
            throw DimensionError("data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        }
        Tensor t;
        t.n_ = std::make_shared<detail::Node<T>>();
        t.n_->shape = std::move(shape);
        t.n_->value = std::move(data);
        t.n_->requires_grad = requires_grad;
        t.n_->seq = detail::g_node_seq.fetch_add(1, std::memory_order_relaxed);
        if (requires_grad) t.n_->ensure_grad();
        return t;
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return from_data({v}, {1}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(n_); }
    const std::vector<int>& shape() const { return node().shape; }
    std::int64_t numel() const { return static_cast<std::int64_t>(node().value.size()); }
    bool requires_grad() const { return node().requires_grad; }

    std::vector<T>& data() { return node().value; }
    const std::vector<T>& data() const { return node().value; }

    bool has_grad() const { return defined() && !n_->grad.empty(); }
    std::vector<T>& grad() {
        if (!has_grad()) throw StateError("tensor has no gradient buffer");
        return n_->grad;
    }
    const std::vector<T>& grad() const {
        if (!has_grad()) throw StateError("tensor has no gradient buffer");
        return n_->grad;
    }

    T item() const {
        if (numel() != 1) throw DimensionError("item() requires a 1-element tensor, got " + shape_str(shape()));
        return node().value[0];
    }

    void zero_grad() {
        if (defined() && !n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), T{});
    }

    // Reverse-mode pass from a scalar output. Seeds d(out)/d(out)=1 and replays
    // the tape in reverse creation order.
    void backward() {
        auto& root = node();
        if (root.value.size() != 1) {
            throw DimensionError("backward() requires a scalar output, got " + shape_str(root.shape));
        }
        if (!root.requires_grad) {
            throw StateError("backward() on a tensor that does not require gradients");
        }
        std::vector<detail::Node<T>*> order;
        std::unordered_set<const detail::Node<T>*> seen;
        std::vector<detail::Node<T>*> stack{&root};
        seen.insert(&root);
        while (!stack.empty()) {
            auto* cur = stack.back();
            stack.pop_back();
            order.push_back(cur);
            for (auto& p : cur->parents) {
                if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
            }
        }
        std::sort(order.begin(), order.end(),
                  [](const auto* a, const auto* b) { return a->seq > b->seq; });
        root.ensure_grad();
        root.grad[0] += T(1);
        for (auto* nptr : order) {
            if (nptr->backprop && !nptr->grad.empty()) nptr->backprop(*nptr);
        }
    }

    std::shared_ptr<detail::Node<T>>& node_ptr() { return require(); }
    const std::shared_ptr<detail::Node<T>>& node_ptr() const { return require(); }

private:
    detail::Node<T>& node() { return *require(); }
    const detail::Node<T>& node() const { return *require(); }
    std::shared_ptr<detail::Node<T>>& require() {
        if (!n_) throw StateError("use of undefined tensor");
        return n_;
    }
    const std::shared_ptr<detail::Node<T>>& require() const {
        if (!n_) throw StateError("use of undefined tensor");
        return n_;
    }

    std::shared_ptr<detail::Node<T>> n_;
};

}  // namespace vt::numkit
