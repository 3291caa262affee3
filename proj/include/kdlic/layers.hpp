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
#include <string>
#include <utility>
#include <vector>

#include "kdlic/conv.hpp"
#include "kdlic/ops.hpp"

namespace kdlic {

template <typename S>
struct NamedParam {
  std::string name;
  Var<S> var;
};

template <typename S>
using ParamList = std::vector<NamedParam<S>>;

/// Generalized divisive normalization on effective (already non-negative)
/// parameters: y_i = x_i / sqrt(beta_i + sum_j gamma_ij * x_j^2), and the
/// multiplicative form when inverse is set.
template <typename S>
Var<S> gdn_apply(const Var<S>& x, const Var<S>& beta, const Var<S>& gamma, bool inverse) {
  const auto& sx = x.value().shape();
  if (sx.size() != 4) throw ShapeError("gdn: expected (B,C,H,W) input");
  const int64_t C = sx[1];
  if (beta.value().numel() != C) {
    throw ShapeError("gdn: beta length " + std::to_string(beta.value().numel()) +
                     " does not match channel count " + std::to_string(C));
  }
  if (gamma.value().numel() != C * C) {
    throw ShapeError("gdn: gamma must be " + std::to_string(C) + "x" + std::to_string(C));
  }
  auto gamma_w = ops::reshape(gamma, {C, C, 1, 1});
  auto norm = ops::conv2d(ops::square(x), gamma_w, beta, 1, 0);
  auto root = ops::sqrt_op(norm);
  return inverse ? ops::mul(x, root) : ops::div(x, root);
}

/// Non-negative reparameterization: stored = sqrt(value + pedestal),
/// effective = max(stored, bound)^2 - pedestal. The lower_bound keeps the
/// stored value trainable at the constraint boundary.
template <typename S>
struct NonNegativeReparam {
  static constexpr double kOffset = 3.814697265625e-06;  // 2^-18
  double minimum = 0.0;

  S pedestal() const { return static_cast<S>(kOffset * kOffset); }
  S bound() const { return static_cast<S>(std::sqrt(minimum + kOffset * kOffset)); }

  Tensor<S> init(const Tensor<S>& value) const {
    Tensor<S> raw(value.shape());
    for (int64_t i = 0; i < value.numel(); ++i) {
      raw[i] = static_cast<S>(std::sqrt(std::max(static_cast<double>(value[i]) + kOffset * kOffset,
                                                 kOffset * kOffset)));
    }
    return raw;
  }

  Var<S> effective(const Var<S>& raw) const {
    return ops::add_scalar(ops::square(ops::lower_bound(raw, bound())), -pedestal());
  }
};

template <typename S>
struct GdnLayer {
  Var<S> beta_raw;   // registered as "<prefix>.beta"
  Var<S> gamma_raw;  // registered as "<prefix>.gamma"
  NonNegativeReparam<S> beta_reparam{1e-6};
  NonNegativeReparam<S> gamma_reparam{0.0};
  bool inverse = false;

  static GdnLayer make(int64_t channels, bool inverse) {
    GdnLayer l;
    l.inverse = inverse;
    Tensor<S> beta0 = Tensor<S>::full({channels}, S(1));
    Tensor<S> gamma0({channels, channels});
    for (int64_t i = 0; i < channels; ++i) gamma0[i * channels + i] = S(0.1);
    l.beta_raw = Var<S>::param(l.beta_reparam.init(beta0));
    l.gamma_raw = Var<S>::param(l.gamma_reparam.init(gamma0));
    return l;
  }

  Var<S> operator()(const Var<S>& x) const {
    return gdn_apply(x, beta_reparam.effective(beta_raw), gamma_reparam.effective(gamma_raw),
                     inverse);
  }

  void register_params(ParamList<S>& out, const std::string& prefix) const {
    out.push_back({prefix + ".beta", beta_raw});
    out.push_back({prefix + ".gamma", gamma_raw});
  }
};

template <typename S>
struct Conv2dLayer {
  Var<S> weight;  // (Co,Ci,kh,kw)
  Var<S> bias;    // (Co)
  int64_t stride = 1;
  int64_t pad = 0;

  static Conv2dLayer make(Rng& rng, int64_t ci, int64_t co, int64_t k, int64_t stride,
                          int64_t pad) {
    Conv2dLayer l;
    l.stride = stride;
    l.pad = pad;
    const double b = 1.0 / std::sqrt(static_cast<double>(ci * k * k));
    l.weight = Var<S>::param(random_uniform<S>(rng, {co, ci, k, k}, -b, b));
    l.bias = Var<S>::param(random_uniform<S>(rng, {co}, -b, b));
    return l;
  }

  Var<S> operator()(const Var<S>& x) const { return ops::conv2d(x, weight, bias, stride, pad); }

  void register_params(ParamList<S>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <typename S>
struct ConvTranspose2dLayer {
  Var<S> weight;  // (Ci,Co,kh,kw)
  Var<S> bias;    // (Co)
  int64_t stride = 1;
  int64_t pad = 0;
  int64_t out_pad = 0;

  static ConvTranspose2dLayer make(Rng& rng, int64_t ci, int64_t co, int64_t k, int64_t stride,
                                   int64_t pad, int64_t out_pad) {
    ConvTranspose2dLayer l;
    l.stride = stride;
    l.pad = pad;
    l.out_pad = out_pad;
    const double b = 1.0 / std::sqrt(static_cast<double>(co * k * k));
    l.weight = Var<S>::param(random_uniform<S>(rng, {ci, co, k, k}, -b, b));
    l.bias = Var<S>::param(random_uniform<S>(rng, {co}, -b, b));
    return l;
  }

  Var<S> operator()(const Var<S>& x) const {
    return ops::conv_transpose2d(x, weight, bias, stride, pad, out_pad);
  }

  void register_params(ParamList<S>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

}  // namespace kdlic
