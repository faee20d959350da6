#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "restorer/nn/tensor.hpp"

namespace restorer::nn {

/// Trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  // Reads this node's grad and accumulates into its inputs.
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.numel() != value.numel() || grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Tape;

/// Handle to a value on a tape. Cheap to copy.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(std::shared_ptr<Node<T>> node, Tape<T>* tape) : node_(std::move(node)), tape_(tape) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(int axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_->requires_grad; }
  T item() const { return node_->value[0]; }
  /// Gradient after Tape::backward (empty if none flowed here).
  const Tensor<T>& grad() const { return node_->grad; }

  Tape<T>& tape() const { return *tape_; }
  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
  Tape<T>* tape_ = nullptr;
};

// Records operations for reverse-mode differentiation. Nodes are appended in
// creation order, which is a topological order, so backward walks the record
// in reverse and visits each node once. A non-recording tape builds no graph
// and lets intermediates die with their handles.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  Var<T> constant(Tensor<T> value) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    return Var<T>(std::move(node), this);
  }

  /// Leaf whose gradient is kept on the node.
  Var<T> variable(Tensor<T> value) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = recording_;
    if (recording_) nodes_.push_back(node);
    return Var<T>(std::move(node), this);
  }

  /// Leaf whose gradient accumulates into `p.grad`.
  Var<T> parameter(Parameter<T>& p) {
    auto node = std::make_shared<Node<T>>();
    node->value = p.value;
    if (recording_) {
      node->requires_grad = true;
      Parameter<T>* target = &p;
      node->backward = [target](Node<T>& self) {
        if (target->grad.numel() != target->value.numel() || target->grad.shape() != target->value.shape())
          target->zero_grad();
        auto dst = target->grad.values();
        auto src = self.grad.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      };
      nodes_.push_back(node);
    }
    return Var<T>(std::move(node), this);
  }

  /// Creates an op output. `backward` is kept only if some input needs grad.
  template <typename... Inputs>
  Var<T> make(Tensor<T> value, std::function<void(Node<T>&)> backward, const Inputs&... inputs) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    const bool needs = recording_ && (false || ... || (inputs.defined() && inputs.requires_grad()));
    if (needs) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      nodes_.push_back(node);
    }
    return Var<T>(std::move(node), this);
  }

  /// Same as make() for a variable number of inputs.
  Var<T> make_n(Tensor<T> value, std::function<void(Node<T>&)> backward, const std::vector<Var<T>>& inputs) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    bool needs = false;
    for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
    if (recording_ && needs) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      nodes_.push_back(node);
    }
    return Var<T>(std::move(node), this);
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every recorded node.
  void backward(const Var<T>& loss) {
    if (loss.value().numel() != 1) throw ShapeError("backward: loss must be a scalar, got " + to_string(loss.shape()));
    if (!loss.requires_grad()) return;
    loss.node().grad_buffer()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = **it;
      if (n.backward && n.grad.shape() == n.value.shape() && !n.grad.empty()) n.backward(n);
    }
  }

 private:
  bool recording_;
  std::vector<std::shared_ptr<Node<T>>> nodes_;
};

}  // namespace restorer::nn
