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
#include <set>

#include "kdlic/model.hpp"

using namespace kdlic;

namespace {

ModelConfig cfg(int64_t n, int64_t m, int64_t hyper, uint64_t seed = 1) {
  ModelConfig c;
  c.channels_n = n;
  c.latent_m = m;
  c.hyper_out_channels = hyper;
  c.init_seed = seed;
  return c;
}

Var<float> random_image(Rng& rng, int64_t b, int64_t h, int64_t w) {
  return Var<float>::constant(random_uniform<float>(rng, {b, 3, h, w}, 0.0, 1.0));
}

}  // namespace

TEST_CASE("parameter counts match the published architecture table") {
  // (N, hyper) -> expected parameter count, from a per-layer closed form.
  struct Row {
    int64_t n, hyper;
    int64_t params;
  };
  const Row rows[] = {
      {16, 16, 265427},   {32, 32, 635939},    {64, 64, 1693379},
      {96, 96, 3172707},  {112, 112, 4070579}, {128, 128, 5073923},
  };
  for (const auto& r : rows) {
    ScaleHyperprior<float> model(cfg(r.n, 192, r.hyper));
    CHECK(model.count_parameters() == r.params);
    CHECK(model.memory_bytes() == r.params * 4);
  }
}

TEST_CASE("parameter count is strictly increasing in N") {
  int64_t prev = 0;
  for (int64_t n : {16, 32, 64, 96, 112, 128}) {
    ScaleHyperprior<float> model(cfg(n, 192, n));
    CHECK(model.count_parameters() > prev);
    prev = model.count_parameters();
  }
}

TEST_CASE("invalid config raises a configuration error naming the field") {
  ModelConfig c = cfg(0, 192, 16);
  CHECK_THROWS_WITH_AS(ScaleHyperprior<float>{c}, doctest::Contains("channels_n"), ConfigError);
  c = cfg(16, 0, 16);
  CHECK_THROWS_WITH_AS(ScaleHyperprior<float>{c}, doctest::Contains("latent_m"), ConfigError);
}

TEST_CASE("forward produces the documented shapes and valid likelihoods") {
  ScaleHyperprior<float> model(cfg(8, 12, 8));
  Rng rng(5);
  auto x = random_image(rng, 2, 64, 64);
  auto out = model.forward(x, ForwardMode::kEval);
  CHECK(out.x_hat.value().shape() == std::vector<int64_t>{2, 3, 64, 64});
  CHECK(out.y_hat.value().shape() == std::vector<int64_t>{2, 12, 4, 4});
  CHECK(out.z_hat.value().shape() == std::vector<int64_t>{2, 8, 1, 1});
  CHECK(out.y_likelihoods.value().same_shape(out.y_hat.value()));
  CHECK(out.z_likelihoods.value().same_shape(out.z_hat.value()));
  for (int64_t i = 0; i < out.y_likelihoods.value().numel(); ++i) {
    const float l = out.y_likelihoods.value()[i];
    CHECK(l > 0.0f);
    CHECK(l <= 1.0f);
    CHECK(std::isfinite(-std::log2(l)));
  }
  for (int64_t i = 0; i < out.x_hat.value().numel(); ++i) {
    CHECK(out.x_hat.value()[i] >= 0.0f);
    CHECK(out.x_hat.value()[i] <= 1.0f);
  }
}

TEST_CASE("inputs not divisible by 64 are padded and cropped back") {
  ScaleHyperprior<float> model(cfg(8, 12, 8));
  Rng rng(6);
  auto x = random_image(rng, 1, 48, 80);
  auto out = model.forward(x, ForwardMode::kEval);
  CHECK(out.x_hat.value().shape() == std::vector<int64_t>{1, 3, 48, 80});
  CHECK(out.y_hat.value().shape() == std::vector<int64_t>{1, 12, 4, 8});  // padded to 64x128
  CHECK(out.num_pixels == 48 * 80);
}

TEST_CASE("eval mode rounds to integers and is bit-exact deterministic") {
  ScaleHyperprior<float> model(cfg(8, 12, 8));
  Rng rng(7);
  auto x = random_image(rng, 1, 64, 64);
  auto a = model.forward(x, ForwardMode::kEval);
  auto b = model.forward(x, ForwardMode::kEval);
  for (int64_t i = 0; i < a.y_hat.value().numel(); ++i) {
    const float v = a.y_hat.value()[i];
    CHECK(v == std::nearbyint(v));
    CHECK(v == b.y_hat.value()[i]);
  }
  for (int64_t i = 0; i < a.x_hat.value().numel(); ++i) CHECK(a.x_hat.value()[i] == b.x_hat.value()[i]);
  for (int64_t i = 0; i < a.z_hat.value().numel(); ++i) {
    CHECK(a.z_hat.value()[i] == std::nearbyint(a.z_hat.value()[i]));
  }
}

TEST_CASE("train mode perturbs by at most one half and resamples noise") {
  ScaleHyperprior<float> model(cfg(8, 12, 8));
  Rng rng(8);
  auto x = random_image(rng, 1, 64, 64);
  auto a = model.forward(x, ForwardMode::kTrain, /*noise_seed=*/11);
  auto b = model.forward(x, ForwardMode::kTrain, /*noise_seed=*/12);
  bool any_diff = false;
  for (int64_t i = 0; i < a.y_hat.value().numel(); ++i) {
    CHECK(std::abs(a.y_hat.value()[i] - a.y.value()[i]) <= 0.5f);
    any_diff = any_diff || a.y_hat.value()[i] != b.y_hat.value()[i];
  }
  CHECK(any_diff);

  // Same seed -> same noise draw.
  auto c = model.forward(x, ForwardMode::kTrain, /*noise_seed=*/11);
  for (int64_t i = 0; i < a.y_hat.value().numel(); ++i) CHECK(a.y_hat.value()[i] == c.y_hat.value()[i]);
}

TEST_CASE("non-finite input is rejected") {
  ScaleHyperprior<float> model(cfg(8, 12, 8));
  Tensor<float> bad({1, 3, 64, 64});
  bad[100] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(model.forward(Var<float>::constant(bad), ForwardMode::kEval), NumericError);
}

TEST_CASE("parameter names are unique and follow the checkpoint layout") {
  ScaleHyperprior<float> model(cfg(8, 12, 8));
  std::set<std::string> names;
  for (const auto& p : model.parameters()) names.insert(p.name);
  CHECK(names.size() == model.parameters().size());
  CHECK(names.count("g_a.0.weight"));
  CHECK(names.count("g_a.1.beta"));
  CHECK(names.count("g_s.6.bias"));
  CHECK(names.count("h_a.4.weight"));
  CHECK(names.count("h_s.4.bias"));
  CHECK(names.count("entropy_bottleneck._matrix0"));
  CHECK(names.count("entropy_bottleneck.quantiles"));
}

TEST_CASE("eval forward builds no tape") {
  ScaleHyperprior<float> model(cfg(8, 12, 8));
  Rng rng(9);
  auto x = random_image(rng, 1, 64, 64);
  auto out = model.forward(x, ForwardMode::kEval);
  CHECK_FALSE(out.x_hat.requires_grad());
  CHECK_FALSE(out.y_likelihoods.requires_grad());
}
