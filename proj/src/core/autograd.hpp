#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace sologan {

// Incremented whenever parameter values change out-of-band (optimizer step,
// init, checkpoint load). Layers that cache derived weight nodes (spectral
// normalization) key their cache on this.
uint64_t param_generation();
void bump_param_generation();

template <typename T>
class Var;

template <typename T>
struct VarNode {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<Var<T>> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(VarNode<T>&)> backward_fn;
};

// Reverse-mode autodiff handle over a shared graph node. Copies are shallow.
template <typename T>
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor<T> value, bool requires_grad = false) {
    Var v;
    v.node_ = std::make_shared<VarNode<T>>();
    v.node_->value = std::move(value);
    v.node_->requires_grad = requires_grad;
    return v;
  }

  static Var result(Tensor<T> value, std::vector<Var> parents,
                    std::function<void(VarNode<T>&)> backward_fn) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || p.requires_grad();
    if (!needs) return leaf(std::move(value), false);
    Var v;
    v.node_ = std::make_shared<VarNode<T>>();
    v.node_->value = std::move(value);
    v.node_->requires_grad = true;
    v.node_->parents = std::move(parents);
    v.node_->backward_fn = std::move(backward_fn);
    return v;
  }

  bool valid() const { return node_ != nullptr; }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  Tensor<T>& grad() { return node_->grad; }
  const Tensor<T>& grad() const { return node_->grad; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  Var detached() const { return leaf(node_->value, false); }

  void zero_grad() {
    if (node_) node_->grad = Tensor<T>();
  }

  VarNode<T>* node() const { return node_.get(); }

  // Backpropagates from this scalar node through the reachable graph.
  void backward() const {
    require(node_ != nullptr && node_->value.numel() == 1, ErrorCode::invalid_argument,
            "backward() requires a scalar root");
    std::vector<VarNode<T>*> order;
    topo_sort(order);
    accumulate_grad(*node_, Tensor<T>::from_data(node_->value.shape(),
                                                 std::vector<T>(1, T(1))));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      VarNode<T>* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  static void accumulate_grad(VarNode<T>& n, const Tensor<T>& g) {
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    T* dst = n.grad.data();
    const T* src = g.data();
    for (int64_t i = 0, e = n.grad.numel(); i < e; ++i) dst[i] += src[i];
  }

  // Grad tensor of n, allocated as zeros on first use.
  static Tensor<T>& ensure_grad(VarNode<T>& n) {
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

 private:
  void topo_sort(std::vector<VarNode<T>*>& order) const {
    std::unordered_set<VarNode<T>*> done;
    std::vector<std::pair<VarNode<T>*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx == 0 && done.count(n)) {
        stack.pop_back();
        continue;
      }
      if (idx < n->parents.size()) {
        VarNode<T>* p = n->parents[idx].node();
        ++idx;
        if (p && p->requires_grad && !done.count(p)) stack.emplace_back(p, 0);
      } else {
        done.insert(n);
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<VarNode<T>> node_;
};

}  // namespace sologan
