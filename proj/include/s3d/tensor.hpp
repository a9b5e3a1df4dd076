#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "s3d/common.hpp"
#include "s3d/random.hpp"

namespace s3d {

// Reverse-mode autodiff over dense row-major arrays. A Tensor is a handle to
// a graph node; ops (ops.hpp) wire parents and a backprop closure when grad
// recording is enabled. The graph is a DAG by construction and backward
// visits each node exactly once.

inline bool& grad_mode_flag() {
    static bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev; }
};

template <typename T>
struct TensorNode {
    Dims dims;
    std::vector<T> value;
    std::vector<T> grad; // empty until touched by backward
    bool requires_grad = false;
    bool trainable = false; // leaf parameter
    std::string name;       // set for parameters only
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
    void zero_grad() { grad.assign(value.size(), T(0)); }
};

template <typename T>
class Tensor {
public:
    using Node = TensorNode<T>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor from_data(Dims dims, std::vector<T> data) {
        check_shape(numel(dims) == data.size(),
                    "tensor data length " + std::to_string(data.size()) +
                        " does not match dims " + dims_str(dims));
        auto n = std::make_shared<Node>();
        n->dims = std::move(dims);
        n->value = std::move(data);
        return Tensor(n);
    }
    static Tensor zeros(Dims dims) {
        return from_data(dims, std::vector<T>(numel(dims), T(0)));
    }
    static Tensor full(Dims dims, T v) {
        return from_data(dims, std::vector<T>(numel(dims), v));
    }
    static Tensor ones(Dims dims) { return full(std::move(dims), T(1)); }
    static Tensor scalar_tensor(T v) { return from_data({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Dims& dims() const { return node_->dims; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rank() const { return node_->dims.size(); }
    std::size_t extent(std::size_t i) const { return node_->dims[i]; }

    const std::vector<T>& data() const { return node_->value; }
    std::vector<T>& mutable_data() { return node_->value; }
    T scalar() const {
        check_contract(size() == 1, "scalar() on tensor of " + std::to_string(size()) + " elements");
        return node_->value[0];
    }
    T operator[](std::size_t i) const { return node_->value[i]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    const std::vector<T>& grad() const { return node_->grad; }

    std::shared_ptr<Node> node() const { return node_; }
    Node* raw() const { return node_.get(); }

private:
    std::shared_ptr<Node> node_;
};

// ---------------------------------------------------------------------------
// Backward engine

template <typename T>
inline std::vector<TensorNode<T>*> topo_order(TensorNode<T>* root) {
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> seen;
    // iterative post-order DFS
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.push_back({root, 0});
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode<T>* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order; // parents before children; reverse-iterate for backward
}

// Propagates d(loss)/d(node) into every reachable node's .grad. The loss must
// be scalar. Existing grads of reachable nodes are reset first.
template <typename T>
inline void run_backward(const Tensor<T>& loss) {
    check_contract(loss.size() == 1,
                   "backward requires a scalar output, got " + dims_str(loss.dims()));
    if (!loss.requires_grad()) return;
    auto order = topo_order(loss.raw());
    for (auto* n : order) n->zero_grad();
    loss.raw()->grad.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode<T>* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// Named parameter store

template <typename T>
class ParamStore {
public:
    Tensor<T> create(const std::string& name, Dims dims, std::vector<T> data,
                     bool trainable = true) {
        check_contract(!map_.count(name), "duplicate parameter name: " + name);
        auto t = Tensor<T>::from_data(std::move(dims), std::move(data));
        t.raw()->requires_grad = trainable;
        t.raw()->trainable = trainable;
        t.raw()->name = name;
        order_.push_back(name);
        map_.emplace(name, t);
        return t;
    }

    Tensor<T> create(const std::string& name, Dims dims, T fill_value = T(0),
                     bool trainable = true) {
        return create(name, dims, std::vector<T>(numel(dims), fill_value), trainable);
    }

    // Uniform(-bound, bound) init; bound defaults to 1/sqrt(fan_in).
    Tensor<T> create_uniform(const std::string& name, Dims dims, std::size_t fan_in,
                             Rng& rng, bool trainable = true) {
        double bound = fan_in ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 1.0;
        std::vector<T> data(numel(dims));
        for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
        return create(name, dims, std::move(data), trainable);
    }

    bool has(const std::string& name) const { return map_.count(name) != 0; }
    Tensor<T> get(const std::string& name) const {
        auto it = map_.find(name);
        check_contract(it != map_.end(), "unknown parameter: " + name);
        return it->second;
    }
    const std::vector<std::string>& names() const { return order_; }
    std::size_t count() const { return order_.size(); }

    void zero_grad() const {
        for (const auto& n : order_) map_.at(n).raw()->zero_grad();
    }
    void set_trainable(bool trainable) const {
        for (const auto& n : order_) {
            map_.at(n).raw()->trainable = trainable;
            map_.at(n).raw()->requires_grad = trainable;
        }
    }

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor<T>> map_;
};

// Gradient map contract: every trainable parameter gets an entry; parameters
// not reachable from the loss get an explicit zero tensor of matching dims.
template <typename T>
inline std::unordered_map<std::string, Tensor<T>> backward(const Tensor<T>& loss,
                                                           const ParamStore<T>& params) {
    params.zero_grad();
    run_backward(loss);
    std::unordered_map<std::string, Tensor<T>> grads;
    for (const auto& name : params.names()) {
        Tensor<T> p = params.get(name);
        if (!p.raw()->trainable) continue;
        if (p.raw()->grad.size() == p.size())
            grads.emplace(name, Tensor<T>::from_data(p.dims(), p.raw()->grad));
        else
            grads.emplace(name, Tensor<T>::zeros(p.dims()));
    }
    return grads;
}

} // namespace s3d
