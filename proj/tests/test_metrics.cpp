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

#include <doctest.h>

#include <cmath>

#include "kdlic/metrics.hpp"
#include "synth.hpp"

using namespace kdlic;
using kdlic::testing::synth_image;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

// Reference MS-SSIM: literal single-scale SSIM with valid-mode windows and
// plain stride-2 mean pooling, structured independently of the library
// implementation.
namespace ref {

double gauss(int i) {
  const double d = i - 5;
  return std::exp(-d * d / 4.5);
}

std::pair<double, double> ssim_cs_l(const std::vector<double>& a, const std::vector<double>& b,
                                    int64_t h, int64_t w) {
  double ksum = 0;
  double k[11][11];
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      k[i][j] = gauss(i) * gauss(j);
      ksum += k[i][j];
    }
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) k[i][j] /= ksum;

  const double C1 = 0.0001, C2 = 0.0009;
  double cs = 0, lum = 0;
  int64_t count = 0;
  for (int64_t y = 0; y + 11 <= h; ++y)
    for (int64_t x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double va = a[size_t((y + i) * w + (x + j))];
          const double vb = b[size_t((y + i) * w + (x + j))];
          ma += k[i][j] * va;
          mb += k[i][j] * vb;
          aa += k[i][j] * va * va;
          bb += k[i][j] * vb * vb;
          ab += k[i][j] * va * vb;
        }
      const double va = aa - ma * ma, vb = bb - mb * mb, cov = ab - ma * mb;
      cs += (2 * cov + C2) / (va + vb + C2);
      lum += (2 * ma * mb + C1) / (ma * ma + mb * mb + C1);
      ++count;
    }
  return {cs / count, lum / count};
}

double msssim_channel(std::vector<double> a, std::vector<double> b, int64_t h, int64_t w) {
  const double weights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double score = 1.0;
  for (int s = 0; s < 5; ++s) {
    auto [cs, lum] = ssim_cs_l(a, b, h, w);
    if (s == 4) {
      score *= std::pow(std::max(cs * lum, 0.0), weights[s]);
      break;
    }
    score *= std::pow(std::max(cs, 0.0), weights[s]);
    std::vector<double> a2(size_t((h / 2) * (w / 2))), b2(a2.size());
    for (int64_t y = 0; y < h / 2; ++y)
      for (int64_t x = 0; x < w / 2; ++x) {
        a2[size_t(y * (w / 2) + x)] = 0.25 * (a[size_t(2 * y * w + 2 * x)] + a[size_t(2 * y * w + 2 * x + 1)] +
                                              a[size_t((2 * y + 1) * w + 2 * x)] +
                                              a[size_t((2 * y + 1) * w + 2 * x + 1)]);
        b2[size_t(y * (w / 2) + x)] = 0.25 * (b[size_t(2 * y * w + 2 * x)] + b[size_t(2 * y * w + 2 * x + 1)] +
                                              b[size_t((2 * y + 1) * w + 2 * x)] +
                                              b[size_t((2 * y + 1) * w + 2 * x + 1)]);
      }
    a = std::move(a2);
    b = std::move(b2);
    h /= 2;
    w /= 2;
  }
  return score;
}

double msssim(const Tensor<float>& x, const Tensor<float>& y) {
  const int64_t h = x.dim(2), w = x.dim(3);
  double acc = 0;
  for (int64_t c = 0; c < 3; ++c) {
    std::vector<double> a(size_t(h * w)), b(size_t(h * w));
    for (int64_t i = 0; i < h * w; ++i) {
      a[size_t(i)] = x[c * h * w + i];
      b[size_t(i)] = y[c * h * w + i];
    }
    acc += msssim_channel(std::move(a), std::move(b), h, w);
  }
  return acc / 3.0;
}

}  // namespace ref

}  // namespace

TEST_CASE("psnr closed forms") {
  Tensor<float> x({1, 3, 4, 4});
  Tensor<float> same = x;
  CHECK(psnr(x, same) == kPsnrCap);

  Tensor<float> ones = Tensor<float>::full({1, 3, 4, 4}, 1.0f);
  CHECK(psnr(x, ones) == doctest::Approx(0.0).epsilon(1e-12));  // MSE = 1

  Tensor<float> offset = Tensor<float>::full({1, 3, 4, 4}, 0.5f);
  Tensor<float> offset2 = Tensor<float>::full({1, 3, 4, 4}, 0.6f);
  CHECK(psnr(offset, offset2) == doctest::Approx(20.0).epsilon(1e-6));  // MSE = 0.01

  CHECK_THROWS_AS(psnr(x, Tensor<float>({1, 3, 4, 5})), ShapeError);
}

TEST_CASE("psnr is consistent with the 8-bit-scale formulation") {
  Rng rng(61);
  auto a = random_uniform<float>(rng, {1, 3, 16, 16}, 0.0, 1.0);
  auto b = random_uniform<float>(rng, {1, 3, 16, 16}, 0.0, 1.0);
  const double mse255 = mse01(a, b) * 255.0 * 255.0;
  const double want = 10.0 * std::log10(255.0 * 255.0 / mse255);
  CHECK(rel_err(psnr(a, b), want) < 1e-9);
}

TEST_CASE("estimate_bpp closed forms and oracle") {
  CompressionOutputs<float> o;
  o.y_likelihoods = Var<float>::constant(Tensor<float>::full({1, 8, 8, 8}, 1.0f));
  CHECK(estimate_bpp(o, 256) == 0.0);

  o.y_likelihoods = Var<float>::constant(Tensor<float>::full({1, 8, 8, 8}, 0.5f));
  CHECK(estimate_bpp(o, 256) == doctest::Approx(2.0).epsilon(1e-12));  // 512 bits / 256 px

  CHECK_THROWS_AS(estimate_bpp(o, 0), PreconditionError);

  Rng rng(62);
  o.y_likelihoods = Var<float>::constant(random_uniform<float>(rng, {1, 4, 6, 6}, 0.01, 1.0));
  o.z_likelihoods = Var<float>::constant(random_uniform<float>(rng, {1, 2, 3, 3}, 0.01, 1.0));
  double bits = 0;
  for (int64_t i = 0; i < o.y_likelihoods.value().numel(); ++i) {
    bits += -std::log2(double(o.y_likelihoods.value()[i]));
  }
  for (int64_t i = 0; i < o.z_likelihoods.value().numel(); ++i) {
    bits += -std::log2(double(o.z_likelihoods.value()[i]));
  }
  CHECK(rel_err(estimate_bpp(o, 100), bits / 100.0) < 1e-9);
}

TEST_CASE("bpp additivity over concatenated latents") {
  Rng rng(63);
  auto ya = random_uniform<float>(rng, {1, 2, 4, 4}, 0.01, 1.0);
  auto yb = random_uniform<float>(rng, {1, 3, 4, 4}, 0.01, 1.0);
  Tensor<float> cat({1, 5, 4, 4});
  for (int64_t i = 0; i < ya.numel(); ++i) cat[i] = ya[i];
  for (int64_t i = 0; i < yb.numel(); ++i) cat[ya.numel() + i] = yb[i];

  CompressionOutputs<float> a, b, ab;
  a.y_likelihoods = Var<float>::constant(ya);
  b.y_likelihoods = Var<float>::constant(yb);
  ab.y_likelihoods = Var<float>::constant(cat);
  CHECK(rel_err(estimate_bpp(ab, 64), estimate_bpp(a, 64) + estimate_bpp(b, 64)) < 1e-12);
}

TEST_CASE("msssim: identical, inverted, and noise cases against the reference") {
  auto img = synth_image(71, 192, 192, /*noise=*/0.02);
  auto x = image_to_tensor(img);

  CHECK(msssim(x, x) == doctest::Approx(1.0).epsilon(1e-9));

  Tensor<float> inv = x;
  for (int64_t i = 0; i < inv.numel(); ++i) inv[i] = 1.0f - inv[i];
  const double inv_impl = msssim(x, inv);
  const double inv_ref = ref::msssim(x, inv);
  CHECK(inv_impl < 0.5);
  CHECK(inv_ref < 0.5);

  Rng rng(72);
  auto n1 = random_uniform<float>(rng, {1, 3, 192, 192}, 0.0, 1.0);
  auto n2 = random_uniform<float>(rng, {1, 3, 192, 192}, 0.0, 1.0);
  const double noise_impl = msssim(n1, n2);
  const double noise_ref = ref::msssim(n1, n2);
  CHECK(noise_impl < 0.1);
  CHECK(noise_ref < 0.1);

  // Library and reference agree on a lightly-degraded image.
  Tensor<float> soft = x;
  Rng rng2(73);
  for (int64_t i = 0; i < soft.numel(); ++i) {
    soft[i] = std::min(1.0f, std::max(0.0f, soft[i] + float(rng2.uniform(-0.03, 0.03))));
  }
  CHECK(std::abs(msssim(x, soft) - ref::msssim(x, soft)) < 0.05);
}

TEST_CASE("msssim rejects too-small images naming the minimum side") {
  Tensor<float> a({1, 3, 96, 200});
  CHECK_THROWS_WITH_AS(msssim(a, a), doctest::Contains("160"), PreconditionError);
}

TEST_CASE("evaluate_model: single image equals its own metrics; duplicates average to the same") {
  ModelConfig c;
  c.channels_n = 4;
  c.latent_m = 6;
  c.hyper_out_channels = 4;
  c.init_seed = 2;
  ScaleHyperprior<float> model(c);

  EvalImage one{"a.png", synth_image(81, 64, 64)};
  auto single = evaluate_model(model, {one});

  auto x = image_to_tensor(one.image);
  auto out = model.forward(Var<float>::constant(x), ForwardMode::kEval);
  CHECK(single.bpp == doctest::Approx(estimate_bpp(out, 64 * 64)).epsilon(1e-12));
  CHECK(single.psnr == doctest::Approx(psnr(x, out.x_hat.value())).epsilon(1e-12));

  auto doubled = evaluate_model(model, {one, one});
  CHECK(doubled.bpp == doctest::Approx(single.bpp).epsilon(1e-12));
  CHECK(doubled.psnr == doctest::Approx(single.psnr).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate_model(model, {}), PreconditionError);
}

TEST_CASE("rd results files round-trip") {
  RDCurve c;
  c.model_id = "m64";
  c.points = {{0.25, 30.0, 0.95, "q1"}, {0.5, 33.0, 0.97, "q3"}};
  const std::string dir = kdlic::testing::temp_dir("results");
  const std::string path = dir + "/c.json";
  save_rd_results(path, c, {"deadbeef", "v0"});
  auto back = load_rd_results(path);
  CHECK(back.model_id == "m64");
  REQUIRE(back.points.size() == 2);
  CHECK(back.points[1].psnr == 33.0);
  CHECK(back.points[1].label == "q3");
}
