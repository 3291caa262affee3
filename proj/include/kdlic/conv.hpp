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
#include <vector>

#include "kdlic/autograd.hpp"

// Strided 2-d convolution and transposed convolution, lowered to GEMM via
// im2col/col2im. Weight layouts follow the usual framework conventions:
// conv (Co,Ci,kh,kw), transposed conv (Ci,Co,kh,kw). Every output element
// is reduced serially by a single thread, so results do not depend on the
// worker count.

namespace kdlic {
namespace ops {

// C(MxN) = A(MxK) * B(KxN), optionally accumulating into C.
template <typename S>
void gemm(int64_t M, int64_t N, int64_t K, const S* A, const S* B, S* C, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < M; ++i) {
    S* crow = C + i * N;
    if (!accumulate) std::fill(crow, crow + N, S(0));
    const S* arow = A + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const S a = arow[k];
      const S* brow = B + k * N;
      for (int64_t j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

// C(MxN) = A(MxK) * B^T where B is (NxK), optionally accumulating.
template <typename S>
void gemm_abt(int64_t M, int64_t N, int64_t K, const S* A, const S* B, S* C, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < M; ++i) {
    const S* arow = A + i * K;
    S* crow = C + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const S* brow = B + j * K;
      S acc = 0;
      for (int64_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
      if (accumulate)
        crow[j] += acc;
      else
        crow[j] = acc;
    }
  }
}

template <typename S>
void transpose(int64_t R, int64_t C, const S* in, S* out) {
  for (int64_t i = 0; i < R; ++i)
    for (int64_t j = 0; j < C; ++j) out[j * R + i] = in[i * C + j];
}

struct ConvGeom {
  int64_t ci, co, kh, kw, stride, pad, out_pad;
  int64_t h, w, ho, wo;  // per-image input/output spatial dims
};

// col (Ci*kh*kw, Ho*Wo) <- x (Ci,H,W): col[(i,dy,dx),(oy,ox)] = x[i, oy*s+dy-p, ox*s+dx-p]
template <typename S>
void im2col(const ConvGeom& g, const S* x, S* col) {
  const int64_t owA = g.ho * g.wo;
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < g.ci * g.kh * g.kw; ++row) {
    const int64_t i = row / (g.kh * g.kw);
    const int64_t dy = (row / g.kw) % g.kh;
    const int64_t dx = row % g.kw;
    S* crow = col + row * owA;
    const S* xi = x + i * g.h * g.w;
    for (int64_t oy = 0; oy < g.ho; ++oy) {
      const int64_t iy = oy * g.stride + dy - g.pad;
      S* cptr = crow + oy * g.wo;
      if (iy < 0 || iy >= g.h) {
        std::fill(cptr, cptr + g.wo, S(0));
        continue;
      }
      const S* xrow = xi + iy * g.w;
      for (int64_t ox = 0; ox < g.wo; ++ox) {
        const int64_t ix = ox * g.stride + dx - g.pad;
        cptr[ox] = (ix >= 0 && ix < g.w) ? xrow[ix] : S(0);
      }
    }
  }
}

// Scatter-add inverse of im2col: x (Ci,H,W) += unfold(col).
template <typename S>
void col2im(const ConvGeom& g, const S* col, S* x) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < g.ci; ++i) {
    S* xi = x + i * g.h * g.w;
    for (int64_t dy = 0; dy < g.kh; ++dy)
      for (int64_t dx = 0; dx < g.kw; ++dx) {
        const S* crow = col + ((i * g.kh + dy) * g.kw + dx) * g.ho * g.wo;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride + dy - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          S* xrow = xi + iy * g.w;
          const S* cptr = crow + oy * g.wo;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride + dx - g.pad;
            if (ix >= 0 && ix < g.w) xrow[ix] += cptr[ox];
          }
        }
      }
  }
}

// Transposed-conv scatter: out (Co,Ho,Wo) += fold of tmp (Co*kh*kw, H*W),
// where out[o, y*s+dy-p, x*s+dx-p] += tmp[(o,dy,dx),(y,x)].
template <typename S>
void col2im_transposed(const ConvGeom& g, const S* tmp, S* out) {
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < g.co; ++o) {
    S* oi = out + o * g.ho * g.wo;
    for (int64_t dy = 0; dy < g.kh; ++dy)
      for (int64_t dx = 0; dx < g.kw; ++dx) {
        const S* trow = tmp + ((o * g.kh + dy) * g.kw + dx) * g.h * g.w;
        for (int64_t y = 0; y < g.h; ++y) {
          const int64_t oy = y * g.stride + dy - g.pad;
          if (oy < 0 || oy >= g.ho) continue;
          S* orow = oi + oy * g.wo;
          const S* tptr = trow + y * g.w;
          for (int64_t x = 0; x < g.w; ++x) {
            const int64_t ox = x * g.stride + dx - g.pad;
            if (ox >= 0 && ox < g.wo) orow[ox] += tptr[x];
          }
        }
      }
  }
}

// Gather dual of col2im_transposed: tmp[(o,dy,dx),(y,x)] = dy_out[o, y*s+dy-p, x*s+dx-p].
template <typename S>
void im2col_transposed(const ConvGeom& g, const S* dy_out, S* tmp) {
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < g.co * g.kh * g.kw; ++row) {
    const int64_t o = row / (g.kh * g.kw);
    const int64_t dy = (row / g.kw) % g.kh;
    const int64_t dx = row % g.kw;
    S* trow = tmp + row * g.h * g.w;
    const S* oi = dy_out + o * g.ho * g.wo;
    for (int64_t y = 0; y < g.h; ++y) {
      const int64_t oy = y * g.stride + dy - g.pad;
      S* tptr = trow + y * g.w;
      if (oy < 0 || oy >= g.ho) {
        std::fill(tptr, tptr + g.w, S(0));
        continue;
      }
      const S* orow = oi + oy * g.wo;
      for (int64_t x = 0; x < g.w; ++x) {
        const int64_t ox = x * g.stride + dx - g.pad;
        tptr[x] = (ox >= 0 && ox < g.wo) ? orow[ox] : S(0);
      }
    }
  }
}

/// conv2d: x (B,Ci,H,W), w (Co,Ci,kh,kw), optional bias (Co).
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& bias, int64_t stride, int64_t pad) {
  const auto& sx = x.value().shape();
  const auto& sw = w.value().shape();
  if (sx.size() != 4 || sw.size() != 4) throw ShapeError("conv2d expects 4-d input and weight");
  if (sx[1] != sw[1]) {
    throw ShapeError("conv2d: input channels " + std::to_string(sx[1]) + " != weight channels " +
                     std::to_string(sw[1]));
  }
  ConvGeom g;
  g.ci = sx[1];
  g.co = sw[0];
  g.kh = sw[2];
  g.kw = sw[3];
  g.stride = stride;
  g.pad = pad;
  g.out_pad = 0;
  g.h = sx[2];
  g.w = sx[3];
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d: input too small for kernel");
  const int64_t B = sx[0];
  const int64_t K = g.ci * g.kh * g.kw;
  const int64_t A = g.ho * g.wo;

  Tensor<S> out({B, g.co, g.ho, g.wo});
  std::vector<S> col(static_cast<size_t>(K * A));
  const bool has_bias = bias.defined();
  for (int64_t b = 0; b < B; ++b) {
    im2col(g, x.value().data() + b * g.ci * g.h * g.w, col.data());
    gemm(g.co, A, K, w.value().data(), col.data(), out.data() + b * g.co * A, false);
    if (has_bias) {
      for (int64_t o = 0; o < g.co; ++o) {
        S* orow = out.data() + (b * g.co + o) * A;
        const S bv = bias.value()[o];
        for (int64_t j = 0; j < A; ++j) orow[j] += bv;
      }
    }
  }

  std::vector<Var<S>> parents = has_bias ? std::vector<Var<S>>{x, w, bias} : std::vector<Var<S>>{x, w};
  return Var<S>::result(
      std::move(out), std::move(parents), [x, w, bias, g, B, K, A, has_bias](typename Var<S>::Node& n) {
        std::vector<S> col(static_cast<size_t>(K * A));
        Tensor<S> gx, gw;
        std::vector<S> wt;
        if (x.requires_grad()) {
          gx = Tensor<S>(x.value().shape());
          wt.resize(static_cast<size_t>(K * g.co));
          transpose(g.co, K, w.value().data(), wt.data());
        }
        if (w.requires_grad()) gw = Tensor<S>(w.value().shape());
        std::vector<S> colgrad(x.requires_grad() ? static_cast<size_t>(K * A) : 0);
        for (int64_t b = 0; b < B; ++b) {
          const S* gy = n.grad.data() + b * g.co * A;
          if (x.requires_grad()) {
            gemm(K, A, g.co, wt.data(), gy, colgrad.data(), false);
            col2im(g, colgrad.data(), gx.data() + b * g.ci * g.h * g.w);
          }
          if (w.requires_grad()) {
            im2col(g, x.value().data() + b * g.ci * g.h * g.w, col.data());
            gemm_abt(g.co, K, A, gy, col.data(), gw.data(), true);
          }
        }
        if (x.requires_grad()) Var<S>::accumulate(x, gx);
        if (w.requires_grad()) Var<S>::accumulate(w, gw);
        if (has_bias && bias.requires_grad()) {
          Tensor<S> gb(bias.value().shape());
          for (int64_t b = 0; b < B; ++b)
            for (int64_t o = 0; o < g.co; ++o) {
              const S* gy = n.grad.data() + (b * g.co + o) * A;
              S acc = 0;
              for (int64_t j = 0; j < A; ++j) acc += gy[j];
              gb[o] += acc;
            }
          Var<S>::accumulate(bias, gb);
        }
      });
}

/// conv_transpose2d: x (B,Ci,H,W), w (Ci,Co,kh,kw), optional bias (Co).
template <typename S>
Var<S> conv_transpose2d(const Var<S>& x, const Var<S>& w, const Var<S>& bias, int64_t stride,
                        int64_t pad, int64_t out_pad) {
  const auto& sx = x.value().shape();
  const auto& sw = w.value().shape();
  if (sx.size() != 4 || sw.size() != 4) throw ShapeError("conv_transpose2d expects 4-d tensors");
  if (sx[1] != sw[0]) {
    throw ShapeError("conv_transpose2d: input channels " + std::to_string(sx[1]) +
                     " != weight channels " + std::to_string(sw[0]));
  }
  ConvGeom g;
  g.ci = sx[1];
  g.co = sw[1];
  g.kh = sw[2];
  g.kw = sw[3];
  g.stride = stride;
  g.pad = pad;
  g.out_pad = out_pad;
  g.h = sx[2];
  g.w = sx[3];
  g.ho = (g.h - 1) * stride - 2 * pad + g.kh + out_pad;
  g.wo = (g.w - 1) * stride - 2 * pad + g.kw + out_pad;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv_transpose2d: degenerate output");
  const int64_t B = sx[0];
  const int64_t K = g.co * g.kh * g.kw;  // rows of the scatter buffer
  const int64_t A = g.h * g.w;
  const int64_t outA = g.ho * g.wo;

  // W viewed as (Ci, Co*kh*kw); tmp = W^T x.
  std::vector<S> wt(static_cast<size_t>(K * g.ci));
  transpose(g.ci, K, w.value().data(), wt.data());

  Tensor<S> out({B, g.co, g.ho, g.wo});
  std::vector<S> tmp(static_cast<size_t>(K * A));
  const bool has_bias = bias.defined();
  for (int64_t b = 0; b < B; ++b) {
    gemm(K, A, g.ci, wt.data(), x.value().data() + b * g.ci * A, tmp.data(), false);
    S* ob = out.data() + b * g.co * outA;
    col2im_transposed(g, tmp.data(), ob);
    if (has_bias) {
      for (int64_t o = 0; o < g.co; ++o) {
        const S bv = bias.value()[o];
        S* orow = ob + o * outA;
        for (int64_t j = 0; j < outA; ++j) orow[j] += bv;
      }
    }
  }

  std::vector<Var<S>> parents = has_bias ? std::vector<Var<S>>{x, w, bias} : std::vector<Var<S>>{x, w};
  return Var<S>::result(
      std::move(out), std::move(parents),
      [x, w, bias, g, B, K, A, outA, has_bias](typename Var<S>::Node& n) {
        std::vector<S> colt(static_cast<size_t>(K * A));
        Tensor<S> gx, gw;
        if (x.requires_grad()) gx = Tensor<S>(x.value().shape());
        if (w.requires_grad()) gw = Tensor<S>(w.value().shape());
        for (int64_t b = 0; b < B; ++b) {
          im2col_transposed(g, n.grad.data() + b * g.co * outA, colt.data());
          if (x.requires_grad()) {
            gemm(g.ci, A, K, w.value().data(), colt.data(), gx.data() + b * g.ci * A, false);
          }
          if (w.requires_grad()) {
            gemm_abt(g.ci, K, A, x.value().data() + b * g.ci * A, colt.data(), gw.data(), true);
          }
        }
        if (x.requires_grad()) Var<S>::accumulate(x, gx);
        if (w.requires_grad()) Var<S>::accumulate(w, gw);
        if (has_bias && bias.requires_grad()) {
          Tensor<S> gb(bias.value().shape());
          for (int64_t b = 0; b < B; ++b)
            for (int64_t o = 0; o < g.co; ++o) {
              const S* gy = n.grad.data() + (b * g.co + o) * outA;
              S acc = 0;
              for (int64_t j = 0; j < outA; ++j) acc += gy[j];
              gb[o] += acc;
            }
          Var<S>::accumulate(bias, gb);
        }
      });
}

}  // namespace ops
}  // namespace kdlic
