#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "artic/core/error.hpp"
#include "artic/core/random.hpp"
#include "artic/core/tensor.hpp"

namespace artic::ad {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff tape. Nodes are appended in forward order; backward()
/// replays the recorded closures in reverse. One tape per training step.
class Tape {
 public:
  explicit Tape(bool training = false, Rng* rng = nullptr, bool grad_enabled = true)
      : training_(training), grad_enabled_(grad_enabled), rng_(rng) {}

  Var leaf(Tensor value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad && grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Leaf memoized on an external key, so a parameter referenced twice in one
  /// forward pass maps to a single node (its gradient accumulates).
  Var shared_leaf(const void* key, const Tensor& value, bool needs_grad) {
    auto it = shared_.find(key);
    if (it != shared_.end()) return Var{it->second};
    Var v = leaf(value, needs_grad);
    shared_[key] = v.id;
    return v;
  }

  /// Node id for a previously registered shared leaf, or invalid Var.
  Var find_shared(const void* key) const {
    auto it = shared_.find(key);
    return it == shared_.end() ? Var{} : Var{it->second};
  }

  Var make(Tensor value, const std::vector<Var>& parents,
           std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    if (grad_enabled_) {
      for (Var p : parents) n.needs_grad = n.needs_grad || needs_grad(p);
      if (n.needs_grad) n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& val(Var v) const { return node_(v).value; }

  bool needs_grad(Var v) const { return node_(v).needs_grad; }

  bool has_grad(Var v) const { return node_(v).grad.defined(); }

  /// Gradient buffer, allocated (zeros) on first access.
  Tensor& grad(Var v) {
    Node& n = node_(v);
    if (!n.grad.defined()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  void backward(Var loss) {
    if (node_(loss).value.numel() != 1)
      throw ShapeError("backward: loss must be scalar");
    if (!node_(loss).needs_grad)
      throw Error("backward: loss does not depend on any differentiable leaf");
    grad(loss).fill(1.0);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      // Unallocated grad means no downstream contribution; nothing to do.
      if (n.back && n.grad.defined()) n.back(*this);
    }
  }

  bool training() const { return training_; }
  bool grad_enabled() const { return grad_enabled_; }

  Rng& rng() {
    if (!rng_) throw Error("tape has no RNG attached");
    return *rng_;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(Tape&)> back;
  };

  Node& node_(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
  const Node& node_(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

  std::deque<Node> nodes_;
  bool training_;
  bool grad_enabled_;
  Rng* rng_;
  std::unordered_map<const void*, int> shared_;
};

}  // namespace artic::ad
