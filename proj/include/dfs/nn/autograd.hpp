#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dfs/nn/tensor.hpp"

// Minimal reverse-mode automatic differentiation over NCHW tensors.
//
// Every op returns a Var whose node records its inputs and a closure that
// pushes the node's gradient back into them. Nodes that do not depend on any
// gradient-requiring leaf carry no closure, so forward passes through frozen
// networks build no graph at all.
namespace dfs::nn {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  T item() const { return node_->value.item(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Gradient accumulated by backward(); empty tensor when nothing arrived.
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }

  // Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  // Builds an op result. The closure is dropped when no input needs gradients.
  static Var make(Tensor<T> value, std::vector<Var> inputs,
                  std::function<void(Node<T>&)> backprop) {
    Var out(std::move(value), false);
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      out.node_->requires_grad = true;
      for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
      out.node_->backprop = std::move(backprop);
    }
    return out;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Seeds d(root)/d(root) = 1 (root must be a scalar) and propagates to every
// leaf that requires gradients. Leaf gradients accumulate across calls.
template <typename T>
void backward(const Var<T>& root);

}  // namespace dfs::nn
