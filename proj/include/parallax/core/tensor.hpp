#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <utility>

#include "parallax/core/common.hpp"

namespace parallax {

namespace detail {

// One value node of the computation graph. Produced tensors own their parents
// through shared_ptr, so a root keeps its whole subgraph alive.
struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until a backward pass touches it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads the accumulated output gradient, scatters into parent grads.
    std::function<void(const std::vector<double>&)> backward;
};

inline std::vector<double>& grad_buf(Node& n) {
    if (n.grad.empty()) n.grad.assign(static_cast<size_t>(numel(n.shape)), 0.0);
    return n.grad;
}

}  // namespace detail

class Tape;

namespace detail {
inline thread_local Tape* t_current_tape = nullptr;
}

// Dense tensor of doubles with reverse-mode differentiation. Value semantics:
// copying a Tensor copies a handle to the same node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        return full(std::move(shape), 0.0);
    }

    static Tensor full(Shape shape, double value) {
        auto n = std::make_shared<detail::Node>();
        n->values.assign(static_cast<size_t>(numel(shape)), value);
        n->shape = std::move(shape);
        return Tensor(std::move(n));
    }

    static Tensor from(Shape shape, std::vector<double> values) {
        check(numel(shape) == static_cast<int>(values.size()),
              "Tensor::from: shape " + shape_str(shape) + " does not match " +
                  std::to_string(values.size()) + " values");
        auto n = std::make_shared<detail::Node>();
        n->shape = std::move(shape);
        n->values = std::move(values);
        return Tensor(std::move(n));
    }

    static Tensor scalar(double value) { return from({}, {value}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int size() const { return numel(node_->shape); }

    const std::vector<double>& values() const& { return node_->values; }
    // rvalue access copies, so chains like f(x).values() cannot dangle
    std::vector<double> values() && { return node_->values; }
    std::vector<double>& mutable_values() { return node_->values; }

    double value() const {
        check(size() == 1, "Tensor::value: tensor " + shape_str(shape()) + " is not scalar");
        return node_->values[0];
    }

    double at(std::initializer_list<int> idx) const {
        const Shape& s = shape();
        check(idx.size() == s.size(), "Tensor::at: rank mismatch");
        int off = 0;
        int i = 0;
        for (int v : idx) {
            off = off * s[i] + v;
            ++i;
        }
        return node_->values[static_cast<size_t>(off)];
    }

    bool requires_grad() const { return node_->requires_grad; }

    // Marks a leaf as trainable. Derived tensors get the flag automatically.
    Tensor& set_requires_grad(bool rg = true) {
        check(node_->parents.empty(), "set_requires_grad: only valid on leaf tensors");
        node_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }

    const std::vector<double>& grad() const {
        check(has_grad(), "Tensor::grad: no gradient populated");
        return node_->grad;
    }

    void zero_grad() { node_->grad.clear(); }

    // Value copy that does not participate in differentiation.
    Tensor detach() const {
        auto n = std::make_shared<detail::Node>();
        n->shape = node_->shape;
        n->values = node_->values;
        return Tensor(std::move(n));
    }

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Records the primitive operations of one forward pass in creation order
// (which is a topological order by construction). Single use: one backward
// per tape; a second call is an error. RAII: the constructor installs the
// tape as the thread-current recorder, the destructor restores the previous.
class Tape {
public:
    Tape() : prev_(detail::t_current_tape) { detail::t_current_tape = this; }

    ~Tape() { detail::t_current_tape = prev_; }

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current() { return detail::t_current_tape; }

    void record(std::shared_ptr<detail::Node> n) { nodes_.push_back(std::move(n)); }

    size_t node_count() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Reverse sweep from a scalar root. Populates grad on every tensor with
    // requires_grad reachable from the root; accumulation is additive, so
    // parameter grads from several tapes sum up until cleared.
    void backward(const Tensor& root) {
        check(root.size() == 1, "backward: root must be scalar, got " + shape_str(root.shape()));
        check(!consumed_, "backward: tape already consumed; rebuild the forward pass");
        consumed_ = true;
        detail::grad_buf(*root.node())[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            detail::Node& n = **it;
            if (n.backward && !n.grad.empty()) n.backward(n.grad);
        }
    }

private:
    std::vector<std::shared_ptr<detail::Node>> nodes_;
    bool consumed_ = false;
    Tape* prev_ = nullptr;
};

namespace detail {

// Finishes construction of an op result: wires parents, propagates the
// requires_grad flag and records on the current tape when tracking applies.
inline Tensor finish_op(Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs,
                        std::function<void(const std::vector<double>&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    bool track = false;
    if (Tape::current()) {
        for (const Tensor& t : inputs)
            if (t.requires_grad()) track = true;
    }
    if (track) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (const Tensor& t : inputs) n->parents.push_back(t.node_ptr());
        n->backward = std::move(backward);
        Tape::current()->record(n);
    }
    return Tensor(std::move(n));
}

}  // namespace detail

}  // namespace parallax
