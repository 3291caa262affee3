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

#include <array>
#include <cmath>
#include <vector>

#include "kdlic/metrics.hpp"

// Multi-scale SSIM: 11-tap Gaussian window (sigma 1.5), reflection-padded
// "same" filtering, 2x2 average-pool downsampling between scales. The
// contrast-structure term is clamped at zero before exponentiation.

namespace kdlic {

namespace {

constexpr int kScales = 5;
constexpr double kWeights[kScales] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

struct Plane {
  int64_t h = 0, w = 0;
  std::vector<double> v;
  double at(int64_t y, int64_t x) const { return v[size_t(y * w + x)]; }
  double& at(int64_t y, int64_t x) { return v[size_t(y * w + x)]; }
};

std::array<double, 11> gaussian11() {
  std::array<double, 11> k{};
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = double(i - 5);
    k[size_t(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += k[size_t(i)];
  }
  for (auto& x : k) x /= sum;
  return k;
}

int64_t reflect(int64_t i, int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

Plane filter_same(const Plane& p) {
  static const auto k = gaussian11();
  Plane tmp{p.h, p.w, std::vector<double>(p.v.size())};
  for (int64_t y = 0; y < p.h; ++y)
    for (int64_t x = 0; x < p.w; ++x) {
      double acc = 0;
      for (int i = 0; i < 11; ++i) acc += k[size_t(i)] * p.at(y, reflect(x + i - 5, p.w));
      tmp.at(y, x) = acc;
    }
  Plane out{p.h, p.w, std::vector<double>(p.v.size())};
  for (int64_t y = 0; y < p.h; ++y)
    for (int64_t x = 0; x < p.w; ++x) {
      double acc = 0;
      for (int i = 0; i < 11; ++i) acc += k[size_t(i)] * tmp.at(reflect(y + i - 5, p.h), x);
      out.at(y, x) = acc;
    }
  return out;
}

Plane downsample2(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(size_t(out.h * out.w));
  for (int64_t y = 0; y < out.h; ++y)
    for (int64_t x = 0; x < out.w; ++x) {
      out.at(y, x) =
          0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                  p.at(2 * y + 1, 2 * x + 1));
    }
  return out;
}

Plane mul_planes(const Plane& a, const Plane& b) {
  Plane out = a;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
  return out;
}

// (mean contrast-structure, mean luminance) for one scale.
std::pair<double, double> ssim_terms(const Plane& a, const Plane& b) {
  const Plane mu_a = filter_same(a);
  const Plane mu_b = filter_same(b);
  const Plane a2 = filter_same(mul_planes(a, a));
  const Plane b2 = filter_same(mul_planes(b, b));
  const Plane ab = filter_same(mul_planes(a, b));
  double cs_sum = 0, l_sum = 0;
  const int64_t n = a.h * a.w;
  for (int64_t i = 0; i < n; ++i) {
    const double ma = mu_a.v[size_t(i)], mb = mu_b.v[size_t(i)];
    const double va = a2.v[size_t(i)] - ma * ma;
    const double vb = b2.v[size_t(i)] - mb * mb;
    const double cov = ab.v[size_t(i)] - ma * mb;
    cs_sum += (2.0 * cov + kC2) / (va + vb + kC2);
    l_sum += (2.0 * ma * mb + kC1) / (ma * ma + mb * mb + kC1);
  }
  return {cs_sum / double(n), l_sum / double(n)};
}

double msssim_plane(Plane a, Plane b) {
  double score = 1.0;
  for (int s = 0; s < kScales; ++s) {
    auto [cs, lum] = ssim_terms(a, b);
    if (s + 1 < kScales) {
      score *= std::pow(std::max(cs, 0.0), kWeights[s]);
      a = downsample2(a);
      b = downsample2(b);
    } else {
      score *= std::pow(std::max(cs * lum, 0.0), kWeights[s]);
    }
  }
  return score;
}

Plane channel_plane(const Tensor<float>& t, int64_t c) {
  const int64_t h = t.dim(2), w = t.dim(3);
  Plane p{h, w, std::vector<double>(size_t(h * w))};
  const float* src = t.data() + c * h * w;
  for (int64_t i = 0; i < h * w; ++i) p.v[size_t(i)] = double(src[i]);
  return p;
}

}  // namespace

double msssim(const Tensor<float>& x, const Tensor<float>& x_hat) {
  if (!x.same_shape(x_hat)) {
    throw ShapeError("msssim: shape mismatch " + x.shape_str() + " vs " + x_hat.shape_str());
  }
  if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError("msssim expects (1,C,H,W)");
  if (x.dim(2) < kMsssimMinSide || x.dim(3) < kMsssimMinSide) {
    throw PreconditionError("msssim requires sides >= " + std::to_string(kMsssimMinSide) +
                            " for 5 dyadic scales, got " + std::to_string(x.dim(2)) + "x" +
                            std::to_string(x.dim(3)));
  }
  double acc = 0;
  for (int64_t c = 0; c < x.dim(1); ++c) {
    acc += msssim_plane(channel_plane(x, c), channel_plane(x_hat, c));
  }
  return acc / double(x.dim(1));
}

}  // namespace kdlic
