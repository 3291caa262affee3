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

#include <algorithm>
#include <cmath>

#include "kdlic/autograd.hpp"

// Differentiable primitives. Each op builds one graph node whose backward
// closure scatters into the captured parents; closures never capture the
// node they belong to (self state is read through the Node& argument).

namespace kdlic {
namespace ops {

template <typename S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* what) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.value().shape_str() + " vs " +
                     b.value().shape_str());
  }
}

// ---------------------------------------------------------------------------
// Elementwise binary

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "add");
  Tensor<S> out(a.value().shape());
  const S* pa = a.value().data();
  const S* pb = b.value().data();
  S* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
  return Var<S>::result(std::move(out), {a, b}, [a, b](typename Var<S>::Node& n) {
    Var<S>::accumulate(a, n.grad);
    Var<S>::accumulate(b, n.grad);
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "sub");
  Tensor<S> out(a.value().shape());
  const S* pa = a.value().data();
  const S* pb = b.value().data();
  S* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
  return Var<S>::result(std::move(out), {a, b}, [a, b](typename Var<S>::Node& n) {
    Var<S>::accumulate(a, n.grad);
    if (b.requires_grad()) {
      Tensor<S> gb(n.grad.shape());
      for (int64_t i = 0; i < gb.numel(); ++i) gb[i] = -n.grad[i];
      Var<S>::accumulate(b, gb);
    }
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "mul");
  Tensor<S> out(a.value().shape());
  const S* pa = a.value().data();
  const S* pb = b.value().data();
  S* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
  return Var<S>::result(std::move(out), {a, b}, [a, b](typename Var<S>::Node& n) {
    if (a.requires_grad()) {
      Tensor<S> ga(n.grad.shape());
      const S* pb2 = b.value().data();
      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] = n.grad[i] * pb2[i];
      Var<S>::accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor<S> gb(n.grad.shape());
      const S* pa2 = a.value().data();
      for (int64_t i = 0; i < gb.numel(); ++i) gb[i] = n.grad[i] * pa2[i];
      Var<S>::accumulate(b, gb);
    }
  });
}

template <typename S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "div");
  Tensor<S> out(a.value().shape());
  const S* pa = a.value().data();
  const S* pb = b.value().data();
  S* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] / pb[i];
  return Var<S>::result(std::move(out), {a, b}, [a, b](typename Var<S>::Node& n) {
    const S* pa2 = a.value().data();
    const S* pb2 = b.value().data();
    if (a.requires_grad()) {
      Tensor<S> ga(n.grad.shape());
      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] = n.grad[i] / pb2[i];
      Var<S>::accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor<S> gb(n.grad.shape());
      for (int64_t i = 0; i < gb.numel(); ++i) gb[i] = -n.grad[i] * pa2[i] / (pb2[i] * pb2[i]);
      Var<S>::accumulate(b, gb);
    }
  });
}

// ---------------------------------------------------------------------------
// Scalar variants

template <typename S>
Var<S> add_scalar(const Var<S>& a, S c) {
  Tensor<S> out(a.value().shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + c;
  return Var<S>::result(std::move(out), {a},
                        [a](typename Var<S>::Node& n) { Var<S>::accumulate(a, n.grad); });
}

template <typename S>
Var<S> mul_scalar(const Var<S>& a, S c) {
  Tensor<S> out(a.value().shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * c;
  return Var<S>::result(std::move(out), {a}, [a, c](typename Var<S>::Node& n) {
    if (!a.requires_grad()) return;
    Tensor<S> ga(n.grad.shape());
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] = n.grad[i] * c;
    Var<S>::accumulate(a, ga);
  });
}

template <typename S>
Var<S> neg(const Var<S>& a) {
  return mul_scalar(a, S(-1));
}

// ---------------------------------------------------------------------------
// Elementwise unary

template <typename S, typename FwdFn, typename BwdFn>
Var<S> unary_op(const Var<S>& a, FwdFn f, BwdFn dfdx_times_g) {
  Tensor<S> out(a.value().shape());
  const S* pa = a.value().data();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(pa[i]);
  return Var<S>::result(std::move(out), {a}, [a, dfdx_times_g](typename Var<S>::Node& n) {
    if (!a.requires_grad()) return;
    Tensor<S> ga(n.grad.shape());
    const S* px = a.value().data();
    const S* py = n.value.data();
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] = dfdx_times_g(px[i], py[i], n.grad[i]);
    Var<S>::accumulate(a, ga);
  });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return x * x; }, [](S x, S, S g) { return S(2) * x * g; });
}

template <typename S>
Var<S> sqrt_op(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::sqrt(x); }, [](S, S y, S g) { return g / (S(2) * y); });
}

template <typename S>
Var<S> exp_op(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::exp(x); }, [](S, S y, S g) { return g * y; });
}

template <typename S>
Var<S> log_op(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::log(x); }, [](S x, S, S g) { return g / x; });
}

template <typename S>
Var<S> abs_op(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::abs(x); },
      [](S x, S, S g) { return x > S(0) ? g : (x < S(0) ? -g : S(0)); });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return x > S(0) ? x : S(0); }, [](S x, S, S g) { return x > S(0) ? g : S(0); });
}

template <typename S>
Var<S> tanh_op(const Var<S>& a) {
  return unary_op(
      a, [](S x) { return std::tanh(x); }, [](S, S y, S g) { return g * (S(1) - y * y); });
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  return unary_op(
      a,
      [](S x) {
        if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
        S e = std::exp(x);
        return e / (S(1) + e);
      },
      [](S, S y, S g) { return g * y * (S(1) - y); });
}

template <typename S>
Var<S> softplus(const Var<S>& a) {
  return unary_op(
      a,
      [](S x) {
        // log(1 + e^x), stable for both signs
        if (x > S(20)) return x;
        if (x < S(-20)) return std::exp(x);
        return std::log1p(std::exp(x));
      },
      [](S x, S, S g) {
        if (x >= S(0)) return g / (S(1) + std::exp(-x));
        S e = std::exp(x);
        return g * e / (S(1) + e);
      });
}

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// Standard normal CDF.
template <typename S>
Var<S> normal_cdf(const Var<S>& a) {
  return unary_op(
      a,
      [](S x) { return static_cast<S>(0.5 * std::erfc(-static_cast<double>(x) * kInvSqrt2)); },
      [](S x, S, S g) {
        double xd = static_cast<double>(x);
        return static_cast<S>(static_cast<double>(g) * kInvSqrt2Pi * std::exp(-0.5 * xd * xd));
      });
}

/// max(x, bound), passing gradient through when x >= bound or when the
/// gradient pushes x upward. Keeps clamped parameters trainable.
template <typename S>
Var<S> lower_bound(const Var<S>& a, S bound) {
  Tensor<S> out(a.value().shape());
  const S* pa = a.value().data();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(pa[i], bound);
  return Var<S>::result(std::move(out), {a}, [a, bound](typename Var<S>::Node& n) {
    if (!a.requires_grad()) return;
    Tensor<S> ga(n.grad.shape());
    const S* px = a.value().data();
    for (int64_t i = 0; i < ga.numel(); ++i) {
      bool pass = px[i] >= bound || n.grad[i] < S(0);
      ga[i] = pass ? n.grad[i] : S(0);
    }
    Var<S>::accumulate(a, ga);
  });
}

/// x + noise with identity gradient (the additive relaxation of rounding).
template <typename S>
Var<S> add_noise(const Var<S>& a, const Tensor<S>& noise) {
  if (!a.value().same_shape(noise)) throw ShapeError("add_noise: shape mismatch");
  Tensor<S> out(a.value().shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + noise[i];
  return Var<S>::result(std::move(out), {a},
                        [a](typename Var<S>::Node& n) { Var<S>::accumulate(a, n.grad); });
}

/// round(x) as a gradient-free constant (eval path only).
template <typename S>
Var<S> round_detached(const Var<S>& a) {
  Tensor<S> out(a.value().shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::nearbyint(a.value()[i]);
  return Var<S>::constant(std::move(out));
}

// ---------------------------------------------------------------------------
// Reductions

template <typename S>
Var<S> sum_all(const Var<S>& a) {
  S acc = 0;
  for (int64_t i = 0; i < a.value().numel(); ++i) acc += a.value()[i];
  return Var<S>::result(Tensor<S>::scalar(acc), {a}, [a](typename Var<S>::Node& n) {
    if (!a.requires_grad()) return;
    Tensor<S> ga = Tensor<S>::full(a.value().shape(), n.grad[0]);
    Var<S>::accumulate(a, ga);
  });
}

template <typename S>
Var<S> mean_all(const Var<S>& a) {
  const int64_t m = a.value().numel();
  if (m == 0) throw ShapeError("mean of empty tensor");
  S acc = 0;
  for (int64_t i = 0; i < m; ++i) acc += a.value()[i];
  acc /= static_cast<S>(m);
  return Var<S>::result(Tensor<S>::scalar(acc), {a}, [a, m](typename Var<S>::Node& n) {
    if (!a.requires_grad()) return;
    Tensor<S> ga = Tensor<S>::full(a.value().shape(), n.grad[0] / static_cast<S>(m));
    Var<S>::accumulate(a, ga);
  });
}

/// Mean squared error between same-shaped tensors.
template <typename S>
Var<S> mse(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "mse");
  return mean_all(square(sub(a, b)));
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename S>
Var<S> reshape(const Var<S>& a, std::vector<int64_t> shape) {
  Tensor<S> out = a.value().reshaped(std::move(shape));
  return Var<S>::result(std::move(out), {a}, [a](typename Var<S>::Node& n) {
    if (!a.requires_grad()) return;
    Var<S>::accumulate(a, n.grad.reshaped(a.value().shape()));
  });
}

namespace detail {
template <typename S>
Tensor<S> permute_tensor(const Tensor<S>& t, const std::vector<int>& perm) {
  const auto& sh = t.shape();
  const int nd = static_cast<int>(sh.size());
  std::vector<int64_t> osh(nd);
  for (int i = 0; i < nd; ++i) osh[i] = sh[perm[i]];
  Tensor<S> out(osh);
  std::vector<int64_t> istrides(nd, 1), ostrides(nd, 1);
  for (int i = nd - 2; i >= 0; --i) istrides[i] = istrides[i + 1] * sh[i + 1];
  for (int i = nd - 2; i >= 0; --i) ostrides[i] = ostrides[i + 1] * osh[i + 1];
  std::vector<int64_t> idx(nd, 0);
  const int64_t m = t.numel();
  for (int64_t lin = 0; lin < m; ++lin) {
    int64_t src = 0;
    for (int i = 0; i < nd; ++i) src += idx[i] * istrides[perm[i]];
    out[lin] = t[src];
    for (int i = nd - 1; i >= 0; --i) {
      if (++idx[i] < osh[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}
}  // namespace detail

template <typename S>
Var<S> permute(const Var<S>& a, std::vector<int> perm) {
  Tensor<S> out = detail::permute_tensor(a.value(), perm);
  return Var<S>::result(std::move(out), {a}, [a, perm](typename Var<S>::Node& n) {
    if (!a.requires_grad()) return;
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
    Var<S>::accumulate(a, detail::permute_tensor(n.grad, inv));
  });
}

// ---------------------------------------------------------------------------
// Per-channel batched matmul: (C,m,k) x (C,k,n) -> (C,m,n)

template <typename S>
Var<S> channel_matmul(const Var<S>& a, const Var<S>& b) {
  const auto& sa = a.value().shape();
  const auto& sb = b.value().shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1]) {
    throw ShapeError("channel_matmul: incompatible shapes " + a.value().shape_str() + " x " +
                     b.value().shape_str());
  }
  const int64_t C = sa[0], M = sa[1], K = sa[2], N = sb[2];
  Tensor<S> out({C, M, N});
  for (int64_t c = 0; c < C; ++c) {
    const S* pa = a.value().data() + c * M * K;
    const S* pb = b.value().data() + c * K * N;
    S* po = out.data() + c * M * N;
    for (int64_t i = 0; i < M; ++i) {
      for (int64_t j = 0; j < N; ++j) po[i * N + j] = S(0);
      for (int64_t k = 0; k < K; ++k) {
        const S av = pa[i * K + k];
        for (int64_t j = 0; j < N; ++j) po[i * N + j] += av * pb[k * N + j];
      }
    }
  }
  return Var<S>::result(std::move(out), {a, b}, [a, b, C, M, K, N](typename Var<S>::Node& n) {
    if (a.requires_grad()) {
      Tensor<S> ga({C, M, K});
      for (int64_t c = 0; c < C; ++c) {
        const S* pg = n.grad.data() + c * M * N;
        const S* pb = b.value().data() + c * K * N;
        S* po = ga.data() + c * M * K;
        for (int64_t i = 0; i < M; ++i)
          for (int64_t k = 0; k < K; ++k) {
            S acc = 0;
            for (int64_t j = 0; j < N; ++j) acc += pg[i * N + j] * pb[k * N + j];
            po[i * K + k] = acc;
          }
      }
      Var<S>::accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor<S> gb({C, K, N});
      for (int64_t c = 0; c < C; ++c) {
        const S* pg = n.grad.data() + c * M * N;
        const S* pa = a.value().data() + c * M * K;
        S* po = gb.data() + c * K * N;
        for (int64_t k = 0; k < K; ++k)
          for (int64_t j = 0; j < N; ++j) po[k * N + j] = S(0);
        for (int64_t i = 0; i < M; ++i)
          for (int64_t k = 0; k < K; ++k) {
            const S av = pa[i * K + k];
            for (int64_t j = 0; j < N; ++j) po[k * N + j] += av * pg[i * N + j];
          }
      }
      Var<S>::accumulate(b, gb);
    }
  });
}

/// (C,m,n) + (C,m,1), broadcast over the trailing axis.
template <typename S>
Var<S> add_bias3(const Var<S>& x, const Var<S>& b) {
  const auto& sx = x.value().shape();
  const auto& sb = b.value().shape();
  if (sx.size() != 3 || sb.size() != 3 || sb[0] != sx[0] || sb[1] != sx[1] || sb[2] != 1) {
    throw ShapeError("add_bias3: incompatible shapes");
  }
  const int64_t C = sx[0], M = sx[1], N = sx[2];
  Tensor<S> out(sx);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < M; ++i) {
      const S bv = b.value()[c * M + i];
      const S* px = x.value().data() + (c * M + i) * N;
      S* po = out.data() + (c * M + i) * N;
      for (int64_t j = 0; j < N; ++j) po[j] = px[j] + bv;
    }
  return Var<S>::result(std::move(out), {x, b}, [x, b, C, M, N](typename Var<S>::Node& n) {
    Var<S>::accumulate(x, n.grad);
    if (b.requires_grad()) {
      Tensor<S> gb({C, M, 1});
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < M; ++i) {
          const S* pg = n.grad.data() + (c * M + i) * N;
          S acc = 0;
          for (int64_t j = 0; j < N; ++j) acc += pg[j];
          gb[c * M + i] = acc;
        }
      Var<S>::accumulate(b, gb);
    }
  });
}

// ---------------------------------------------------------------------------
// Row-wise log-softmax on a 2-d tensor (used by the KL latent variant)

template <typename S>
Var<S> log_softmax_rows(const Var<S>& a) {
  const auto& sh = a.value().shape();
  if (sh.size() != 2) throw ShapeError("log_softmax_rows expects a 2-d tensor");
  const int64_t R = sh[0], C = sh[1];
  Tensor<S> out(sh);
  for (int64_t r = 0; r < R; ++r) {
    const S* px = a.value().data() + r * C;
    S* po = out.data() + r * C;
    S mx = px[0];
    for (int64_t j = 1; j < C; ++j) mx = std::max(mx, px[j]);
    S lse = 0;
    for (int64_t j = 0; j < C; ++j) lse += std::exp(px[j] - mx);
    lse = mx + std::log(lse);
    for (int64_t j = 0; j < C; ++j) po[j] = px[j] - lse;
  }
  return Var<S>::result(std::move(out), {a}, [a, R, C](typename Var<S>::Node& n) {
    if (!a.requires_grad()) return;
    Tensor<S> ga(n.grad.shape());
    for (int64_t r = 0; r < R; ++r) {
      const S* pg = n.grad.data() + r * C;
      const S* py = n.value.data() + r * C;
      S gsum = 0;
      for (int64_t j = 0; j < C; ++j) gsum += pg[j];
      for (int64_t j = 0; j < C; ++j) ga[r * C + j] = pg[j] - std::exp(py[j]) * gsum;
    }
    Var<S>::accumulate(a, ga);
  });
}

// ---------------------------------------------------------------------------
// Spatial padding / cropping on (B,C,H,W)

template <typename S>
Var<S> reflection_pad2d(const Var<S>& a, int64_t top, int64_t bottom, int64_t left, int64_t right) {
  const auto& sh = a.value().shape();
  if (sh.size() != 4) throw ShapeError("reflection_pad2d expects (B,C,H,W)");
  const int64_t B = sh[0], C = sh[1], H = sh[2], W = sh[3];
  if (H < 2 && (top > 0 || bottom > 0)) throw ShapeError("reflection pad needs H >= 2");
  if (W < 2 && (left > 0 || right > 0)) throw ShapeError("reflection pad needs W >= 2");
  const int64_t Ho = H + top + bottom, Wo = W + left + right;
  auto reflect = [](int64_t i, int64_t n) {
    // mirror without repeating the edge sample
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
  };
  Tensor<S> out({B, C, Ho, Wo});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < Ho; ++y) {
        const int64_t sy = reflect(y - top, H);
        for (int64_t x = 0; x < Wo; ++x) {
          out.at4(b, c, y, x) = a.value().at4(b, c, sy, reflect(x - left, W));
        }
      }
  return Var<S>::result(std::move(out), {a},
                        [a, top, left, B, C, H, W, Ho, Wo, reflect](typename Var<S>::Node& n) {
                          if (!a.requires_grad()) return;
                          Tensor<S> ga(a.value().shape());
                          for (int64_t b = 0; b < B; ++b)
                            for (int64_t c = 0; c < C; ++c)
                              for (int64_t y = 0; y < Ho; ++y) {
                                const int64_t sy = reflect(y - top, H);
                                for (int64_t x = 0; x < Wo; ++x) {
                                  ga.at4(b, c, sy, reflect(x - left, W)) += n.grad.at4(b, c, y, x);
                                }
                              }
                          Var<S>::accumulate(a, ga);
                        });
}

template <typename S>
Var<S> crop2d(const Var<S>& a, int64_t y0, int64_t x0, int64_t h, int64_t w) {
  const auto& sh = a.value().shape();
  if (sh.size() != 4) throw ShapeError("crop2d expects (B,C,H,W)");
  const int64_t B = sh[0], C = sh[1];
  if (y0 < 0 || x0 < 0 || y0 + h > sh[2] || x0 + w > sh[3]) throw ShapeError("crop2d out of range");
  Tensor<S> out({B, C, h, w});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) out.at4(b, c, y, x) = a.value().at4(b, c, y0 + y, x0 + x);
  return Var<S>::result(std::move(out), {a}, [a, y0, x0, h, w, B, C](typename Var<S>::Node& n) {
    if (!a.requires_grad()) return;
    Tensor<S> ga(a.value().shape());
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) ga.at4(b, c, y0 + y, x0 + x) = n.grad.at4(b, c, y, x);
    Var<S>::accumulate(a, ga);
  });
}

}  // namespace ops
}  // namespace kdlic
