#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "tensor.hpp"

namespace cgan {

// A named trainable tensor with its gradient slot. Gradients accumulate;
// zero them between steps with zero_grad().
template <typename T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string name_, Tensor<T> value_)
      : name(std::move(name_)), value(std::move(value_)), grad(value.shape(), T{0}) {}

  void zero_grad() { grad.fill(T{0}); }

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// Reverse-mode autodiff tape for one training step.
//
// Nodes are appended in evaluation order, so every node's inputs precede it
// and backward() can walk the list in reverse. Parameters enter the tape
// through param(); after backward() their node gradients are added into
// Parameter::grad. A tape is meant to be discarded after one backward pass.
template <typename T>
class Tape {
 public:
  // Called with the gradient flowing into the node; it pushes gradients into
  // the node's inputs via accumulate().
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr, {}); }

  Var leaf(Tensor<T> value, bool requires_grad = true) { return push(std::move(value), requires_grad, nullptr, {}); }

  // Records the parameter's current value. With track=false the value enters
  // as a constant, which detaches the parameter from this tape.
  Var param(Parameter<T>& p, bool track = true) {
    return push(p.value, track, track ? &p : nullptr, {});
  }

  // Records an operation result. The backward rule is kept only when some
  // input requires a gradient.
  Var record(Tensor<T> value, std::span<const Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (Var v : inputs) needs = needs || requires_grad(v);
    return push(std::move(value), needs, nullptr, needs ? std::move(backward) : BackwardFn{});
  }

  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  // The handle the next recorded node will get; lets a backward rule refer
  // to its own output.
  Var next() const { return Var{nodes_.size()}; }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  const Shape& shape(Var v) const { return node(v).value.shape(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Gradient of the last backward() loss with respect to v (zeros if none flowed).
  Tensor<T> grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty()) return Tensor<T>(n.value.shape(), T{0});
    return n.grad;
  }

  void accumulate(Var v, const Tensor<T>& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape()) {
      throw DimensionError("gradient shape " + to_string(g.shape()) + " does not match value shape " +
                           to_string(n.value.shape()));
    }
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    auto dst = n.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  // Same as accumulate() but moves the buffer when the slot is empty.
  void accumulate(Var v, Tensor<T>&& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.empty() && g.shape() == n.value.shape()) {
      n.grad = std::move(g);
      return;
    }
    accumulate(v, static_cast<const Tensor<T>&>(g));
  }

  void backward(Var loss) {
    const Node& root = node(loss);
    if (root.value.size() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " + to_string(root.value.shape()));
    }
    if (nodes_.empty()) throw ContractError("backward() on an empty tape");
    for (auto& n : nodes_) n.grad = Tensor<T>();
    if (!root.requires_grad) return;
    nodes_[loss.id].grad = Tensor<T>(root.value.shape(), T{1});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      // Rules only touch earlier nodes, so n.grad stays put while they run.
      if (n.backward) n.backward(*this, n.grad);
      if (n.parameter) {
        auto dst = n.parameter->grad.data();
        auto src = n.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* parameter = nullptr;
    BackwardFn backward;
  };

  Var push(Tensor<T> value, bool requires_grad, Parameter<T>* p, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), requires_grad, p, std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
    return nodes_[v.id];
  }

  // deque: values and shapes handed out by reference stay valid while ops append nodes.
  std::deque<Node> nodes_;
};

}  // namespace cgan
