#pragma once

#include <deque>
#include <functional>
#include <initializer_list>

#include "tamo/core/params.hpp"
#include "tamo/core/tensor.hpp"

namespace tamo::core {

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const;
  const Tensor<T>& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a valid
/// topological order for the backward sweep.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor<T>& out_grad)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Leaf without gradient tracking.
  Var<T> constant(Tensor<T> value) { return push(std::move(value), nullptr, false, nullptr); }
  /// Leaf whose gradient is retained (used by gradient checks).
  Var<T> input(Tensor<T> value) { return push(std::move(value), nullptr, grad_enabled_, nullptr); }
  /// Leaf bound to a parameter; backward accumulates into `p.grad`.
  Var<T> param(Parameter<T>& p) {
    nodes_.push_back(Node{});
    Node& n = nodes_.back();
    n.external = &p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_;
    return Var<T>(this, nodes_.size() - 1);
  }

  /// Read-only leaf bound to a parameter value; never receives gradients.
  Var<T> param(const Parameter<T>& p) {
    nodes_.push_back(Node{});
    nodes_.back().external = &p.value;
    return Var<T>(this, nodes_.size() - 1);
  }

  /// Record an op result. `fn` is dropped when no parent requires a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& p : parents) needs = needs || requires_grad(p.id());
    }
    return push(std::move(value), needs ? std::move(fn) : BackwardFn{}, needs, nullptr);
  }
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& parents, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& p : parents) needs = needs || requires_grad(p.id());
    }
    return push(std::move(value), needs ? std::move(fn) : BackwardFn{}, needs, nullptr);
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Accumulated gradient of a leaf; empty when nothing flowed into it.
  /// Intermediate gradients are released during the backward sweep.
  const Tensor<T>& grad(std::size_t id) const { return nodes_[id].grad; }

  /// Zero-initialized gradient buffer for accumulation by backward functions.
  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(value(id).shape(), T{});
    return n.grad;
  }

  /// Backpropagate from a 1x1 output. Intermediate gradients from earlier calls
  /// are cleared first; parameter gradients keep accumulating.
  void backward(Var<T> out, T seed = T(1));
  void backward(Var<T> out, const Tensor<T>& seed);

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Parameter<T>* param = nullptr;
    Tensor<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var<T> push(Tensor<T> value, BackwardFn fn, bool needs_grad, Parameter<T>* param) {
    nodes_.push_back(Node{std::move(value), nullptr, param, Tensor<T>{}, std::move(fn), needs_grad});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  bool grad_enabled_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}
template <typename T>
const Tensor<T>& Var<T>::grad() const {
  return graph_->grad(id_);
}

template <typename T>
void Graph<T>::backward(Var<T> out, T seed) {
  if (out.value().size() != 1) throw DimensionError("backward() needs a scalar output, got " + shape_string(out.value().shape()));
  Tensor<T> s(out.value().shape(), seed);
  backward(out, s);
}

template <typename T>
void Graph<T>::backward(Var<T> out, const Tensor<T>& seed) {
  if (!grad_enabled_) throw Error("backward() on a graph built without gradients");
  if (&out.graph() != this) throw Error("backward() on a Var from another graph");
  if (seed.size() != out.value().size()) throw DimensionError("backward() seed shape mismatch");
  for (auto& n : nodes_) n.grad = Tensor<T>{};
  grad_buffer(out.id()) += seed;
  for (std::size_t i = out.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, n.grad);
      n.grad = Tensor<T>{};
    }
  }
}

}  // namespace tamo::core
