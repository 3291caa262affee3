// Copyright 2026 the kdlic Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kdlic/tensor.hpp"

namespace kdlic {

/// Reverse-mode automatic differentiation over a dynamically-built DAG.
///
/// A Var is a shared handle to a graph node holding a value, an optional
/// gradient, and a backward closure that scatters the node's gradient into
/// its parents. Graph construction is suppressed inside a NoGradGuard or
/// when no input requires a gradient, so eval-mode inference allocates no
/// tape and is safe to run concurrently on a frozen model.

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

struct NoGradGuard {
  NoGradGuard() : prev(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  bool prev;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

template <typename S>
class Var {
 public:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents
  };

  Var() = default;

  /// Leaf that participates in gradients (a trainable parameter).
  static Var param(Tensor<S> value) {
    Var v;
    v.n_ = std::make_shared<Node>();
    v.n_->value = std::move(value);
    v.n_->requires_grad = true;
    v.n_->is_leaf = true;
    return v;
  }

  /// Leaf with no gradient (inputs, frozen targets).
  static Var constant(Tensor<S> value) {
    Var v;
    v.n_ = std::make_shared<Node>();
    v.n_->value = std::move(value);
    return v;
  }

  /// Interior node produced by an op.
  static Var result(Tensor<S> value, std::vector<Var> parents,
                    std::function<void(Node&)> backward_fn) {
    Var v;
    v.n_ = std::make_shared<Node>();
    v.n_->value = std::move(value);
    bool need = false;
    if (grad_enabled()) {
      for (const auto& p : parents) need = need || p.requires_grad();
    }
    if (need) {
      v.n_->requires_grad = true;
      v.n_->parents = std::move(parents);
      v.n_->backward_fn = std::move(backward_fn);
    }
    return v;
  }

  bool defined() const { return n_ != nullptr; }
  const Tensor<S>& value() const { return n_->value; }
  Tensor<S>& mutable_value() { return n_->value; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  bool is_leaf() const { return n_ && n_->is_leaf; }

  const Tensor<S>& grad() const { return n_->grad; }
  bool has_grad() const { return n_ && !n_->grad.empty(); }
  void zero_grad() {
    if (n_ && !n_->grad.empty()) n_->grad.fill(S(0));
  }
  void drop_grad() {
    if (n_) n_->grad = Tensor<S>();
  }

  /// Detached view of the same value (no history, no grad).
  Var detach() const { return constant(n_->value); }

  Node* node() const { return n_.get(); }
  std::shared_ptr<Node> handle() const { return n_; }

  static void accumulate(const Var& v, const Tensor<S>& delta) {
    if (!v.requires_grad()) return;
    Node* n = v.n_.get();
    if (n->grad.empty()) n->grad = Tensor<S>(n->value.shape());
    S* g = n->grad.data();
    const S* d = delta.data();
    const int64_t m = delta.numel();
    for (int64_t i = 0; i < m; ++i) g[i] += d[i];
  }

  /// Backpropagate from this scalar node. Interior tape state (closures,
  /// gradients, parent links) is released as the sweep passes each node;
  /// a graph supports one backward pass.
  void backward() {
    if (!n_) throw NumericError("backward on undefined Var");
    if (n_->value.numel() != 1) throw ShapeError("backward requires a scalar root");
    if (!n_->requires_grad) return;

    // Post-order DFS; `order` holds shared ownership so releasing parent
    // links mid-sweep cannot destroy a node that has yet to run.
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<Node*> seen;
    struct Frame {
      std::shared_ptr<Node> node;
      size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({n_, 0});
    seen.insert(n_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        const Var& pv = f.node->parents[f.next_parent++];
        Node* p = pv.node();
        if (p && p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({pv.handle(), 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }

    n_->grad = Tensor<S>::full({1}, S(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = it->get();
      if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
      if (!node->is_leaf) {
        node->backward_fn = nullptr;
        node->parents.clear();
        node->grad = Tensor<S>();
      }
    }
  }

 private:
  std::shared_ptr<Node> n_;
};

using VarF = Var<float>;
using VarD = Var<double>;

}  // namespace kdlic
