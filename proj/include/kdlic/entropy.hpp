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

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "kdlic/layers.hpp"

namespace kdlic {

// Likelihoods below this mass are clamped so -log2 stays finite.
inline constexpr double kLikelihoodFloor = 1.52587890625e-05;  // 2^-16

// Predicted Gaussian scales are clamped to at least this value.
inline constexpr double kScaleFloor = 0.11;

/// Learned factorized prior over a per-channel variable: a monotone CDF
/// built from K=4 affine stages with widths (3,3,3), evaluated at +-1/2
/// around the (noisy or rounded) value to yield per-element interval mass.
template <typename S>
struct FactorizedPrior {
  int64_t channels = 0;
  static constexpr int kStages = 4;
  std::array<Var<S>, kStages> matrices;  // (C, f_out, f_in)
  std::array<Var<S>, kStages> biases;    // (C, f_out, 1)
  std::array<Var<S>, kStages - 1> factors;
  Var<S> quantiles;  // (C, 1, 3): lower tail, median, upper tail
  double tail_mass = 1e-9;
  double init_scale = 10.0;

  static FactorizedPrior make(Rng& rng, int64_t channels) {
    FactorizedPrior p;
    p.channels = channels;
    const std::array<int64_t, kStages + 1> widths = {1, 3, 3, 3, 1};
    const double scale = std::pow(p.init_scale, 1.0 / kStages);
    for (int k = 0; k < kStages; ++k) {
      const int64_t fin = widths[k], fout = widths[k + 1];
      const double init = std::log(std::expm1(1.0 / scale / static_cast<double>(fout)));
      p.matrices[k] = Var<S>::param(Tensor<S>::full({channels, fout, fin}, static_cast<S>(init)));
      p.biases[k] = Var<S>::param(random_uniform<S>(rng, {channels, fout, 1}, -0.5, 0.5));
      if (k < kStages - 1) p.factors[k] = Var<S>::param(Tensor<S>::zeros({channels, fout, 1}));
    }
    Tensor<S> q({channels, 1, 3});
    for (int64_t c = 0; c < channels; ++c) {
      q[c * 3 + 0] = static_cast<S>(-p.init_scale);
      q[c * 3 + 1] = S(0);
      q[c * 3 + 2] = static_cast<S>(p.init_scale);
    }
    p.quantiles = Var<S>::param(q);
    return p;
  }

  /// Monotone logit-CDF evaluated columnwise on v of shape (C, 1, n).
  Var<S> logits_cumulative(const Var<S>& v, bool stop_gradient) const {
    Var<S> cur = v;
    for (int k = 0; k < kStages; ++k) {
      Var<S> m = stop_gradient ? matrices[k].detach() : matrices[k];
      Var<S> b = stop_gradient ? biases[k].detach() : biases[k];
      cur = ops::add_bias3(ops::channel_matmul(ops::softplus(m), cur), b);
      if (k < kStages - 1) {
        Var<S> f = stop_gradient ? factors[k].detach() : factors[k];
        // cur += tanh(factor) * tanh(cur), broadcast over the last axis
        auto t = ops::tanh_op(f);
        const auto& sh = cur.value().shape();
        auto t_full = broadcast_last(t, sh[2]);
        cur = ops::add(cur, ops::mul(t_full, ops::tanh_op(cur)));
      }
    }
    return cur;
  }

  /// Interval mass around each element of v (B,C,H,W); result has v's shape.
  Var<S> likelihood(const Var<S>& v) const {
    const auto& sh = v.value().shape();
    if (sh.size() != 4 || sh[1] != channels) {
      throw ShapeError("factorized prior: expected (B," + std::to_string(channels) + ",H,W)");
    }
    const int64_t B = sh[0], H = sh[2], W = sh[3];
    auto flat = ops::reshape(ops::permute(v, {1, 0, 2, 3}), {channels, 1, B * H * W});
    auto lower = logits_cumulative(ops::add_scalar(flat, S(-0.5)), false);
    auto upper = logits_cumulative(ops::add_scalar(flat, S(0.5)), false);
    // Evaluate the difference on the side with headroom: flip both sigmoids
    // when the interval lies in the upper tail.
    Tensor<S> sign(lower.value().shape());
    for (int64_t i = 0; i < sign.numel(); ++i) {
      const S s = lower.value()[i] + upper.value()[i];
      sign[i] = s > S(0) ? S(-1) : S(1);
    }
    auto sgn = Var<S>::constant(std::move(sign));
    auto lik = ops::abs_op(
        ops::sub(ops::sigmoid(ops::mul(sgn, upper)), ops::sigmoid(ops::mul(sgn, lower))));
    lik = ops::lower_bound(lik, static_cast<S>(kLikelihoodFloor));
    auto back = ops::permute(ops::reshape(lik, {channels, B, H, W}), {1, 0, 2, 3});
    return back;
  }

  /// Calibration loss pulling the stored quantiles to the distribution's
  /// tails and median; gradients reach only the quantiles.
  Var<S> aux_loss() const {
    auto logits = logits_cumulative(quantiles, /*stop_gradient=*/true);
    const S t = static_cast<S>(std::log(2.0 / tail_mass - 1.0));
    Tensor<S> target({channels, 1, 3});
    for (int64_t c = 0; c < channels; ++c) {
      target[c * 3 + 0] = -t;
      target[c * 3 + 1] = S(0);
      target[c * 3 + 2] = t;
    }
    return ops::sum_all(ops::abs_op(ops::sub(logits, Var<S>::constant(std::move(target)))));
  }

  void register_params(ParamList<S>& out, const std::string& prefix) const {
    for (int k = 0; k < kStages; ++k) {
      out.push_back({prefix + "._matrix" + std::to_string(k), matrices[k]});
      out.push_back({prefix + "._bias" + std::to_string(k), biases[k]});
      if (k < kStages - 1) out.push_back({prefix + "._factor" + std::to_string(k), factors[k]});
    }
    out.push_back({prefix + ".quantiles", quantiles});
  }

 private:
  // (C,f,1) -> (C,f,n) by repetition.
  static Var<S> broadcast_last(const Var<S>& t, int64_t n) {
    const auto& sh = t.value().shape();
    const int64_t C = sh[0], F = sh[1];
    Tensor<S> out({C, F, n});
    for (int64_t cf = 0; cf < C * F; ++cf) {
      const S v = t.value()[cf];
      S* po = out.data() + cf * n;
      for (int64_t j = 0; j < n; ++j) po[j] = v;
    }
    return Var<S>::result(std::move(out), {t}, [t, C, F, n](typename Var<S>::Node& nd) {
      if (!t.requires_grad()) return;
      Tensor<S> gt({C, F, 1});
      for (int64_t cf = 0; cf < C * F; ++cf) {
        const S* pg = nd.grad.data() + cf * n;
        S acc = 0;
        for (int64_t j = 0; j < n; ++j) acc += pg[j];
        gt[cf] = acc;
      }
      Var<S>::accumulate(t, gt);
    });
  }
};

/// Gaussian conditional entropy model: given per-element scales sigma,
/// the likelihood of value v is the mass of the +-1/2 interval under
/// N(0, sigma^2), with sigma floored at kScaleFloor.
template <typename S>
struct GaussianConditional {
  static Var<S> likelihood(const Var<S>& v, const Var<S>& scales) {
    ops::check_same_shape(v, scales, "gaussian likelihood");
    auto sigma = ops::lower_bound(scales, static_cast<S>(kScaleFloor));
    auto av = ops::abs_op(v);
    auto upper = ops::normal_cdf(ops::div(ops::add_scalar(ops::neg(av), S(0.5)), sigma));
    auto lower = ops::normal_cdf(ops::div(ops::add_scalar(ops::neg(av), S(-0.5)), sigma));
    return ops::lower_bound(ops::sub(upper, lower), static_cast<S>(kLikelihoodFloor));
  }
};

}  // namespace kdlic
