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

#include <cmath>
#include <vector>

#include "kdlic/autograd.hpp"

namespace kdlic {

/// Adaptive-moment gradient descent with bias correction.
template <typename S>
class Adam {
 public:
  explicit Adam(std::vector<Var<S>> params, double lr = 1e-4, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p.value().shape());
      v_.emplace_back(p.value().shape());
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      const Tensor<S>& g = p.grad();
      Tensor<S>& m = m_[i];
      Tensor<S>& v = v_[i];
      Tensor<S>& w = p.mutable_value();
      for (int64_t j = 0; j < g.numel(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * gj;
        const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * gj * gj;
        m[j] = static_cast<S>(mj);
        v[j] = static_cast<S>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        w[j] = static_cast<S>(static_cast<double>(w[j]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

 private:
  std::vector<Var<S>> params_;
  std::vector<Tensor<S>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

/// Scale gradients so their global L2 norm does not exceed max_norm.
/// Returns the pre-clip norm.
template <typename S>
double clip_global_grad_norm(const std::vector<Var<S>>& params, double max_norm) {
  double sq = 0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    const Tensor<S>& g = p.grad();
    for (int64_t j = 0; j < g.numel(); ++j) {
      sq += static_cast<double>(g[j]) * static_cast<double>(g[j]);
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const S scale = static_cast<S>(max_norm / norm);
    for (const auto& p : params) {
      if (!p.has_grad()) continue;
      auto* n = p.node();
      for (int64_t j = 0; j < n->grad.numel(); ++j) n->grad[j] *= scale;
    }
  }
  return norm;
}

}  // namespace kdlic
