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

#include "gradcheck.hpp"
#include "kdlic/losses.hpp"

using namespace kdlic;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

// ---- scalar reference computations (independent of the loss module) ----

template <typename S>
double ref_mse(const Tensor<S>& a, const Tensor<S>& b) {
  double acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return acc / double(a.numel());
}

template <typename S>
double ref_bpp(const Tensor<S>& ylik, const Tensor<S>* zlik, int64_t batch, int64_t pixels) {
  double bits = 0;
  for (int64_t i = 0; i < ylik.numel(); ++i) bits += -std::log2(double(ylik[i]));
  if (zlik) {
    for (int64_t i = 0; i < zlik->numel(); ++i) bits += -std::log2(double((*zlik)[i]));
  }
  return bits / (double(batch) * double(pixels));
}

CompressionOutputs<double> make_outputs(Rng& rng, int64_t pixels_side) {
  CompressionOutputs<double> o;
  o.batch = 1;
  o.num_pixels = pixels_side * pixels_side;
  o.y = Var<double>::constant(random_uniform<double>(rng, {1, 3, 4, 4}, -4.0, 4.0));
  o.y_hat = Var<double>::constant(random_uniform<double>(rng, {1, 3, 4, 4}, -4.0, 4.0));
  o.z = Var<double>::constant(random_uniform<double>(rng, {1, 2, 2, 2}, -4.0, 4.0));
  o.z_hat = Var<double>::constant(random_uniform<double>(rng, {1, 2, 2, 2}, -4.0, 4.0));
  o.x_hat = Var<double>::constant(
      random_uniform<double>(rng, {1, 3, pixels_side, pixels_side}, 0.0, 1.0));
  o.y_likelihoods = Var<double>::constant(random_uniform<double>(rng, {1, 3, 4, 4}, 0.01, 1.0));
  o.z_likelihoods = Var<double>::constant(random_uniform<double>(rng, {1, 2, 2, 2}, 0.01, 1.0));
  return o;
}

KDWeights l1_weights(double l1, double l2, double l3, double lam) {
  KDWeights w;
  w.lambda1 = l1;
  w.lambda2 = l2;
  w.lambda3 = l3;
  w.rd_lambda = lam;
  w.loss_form = LossForm::kL1;
  return w;
}

KDWeights l2_weights(double l1, double l2, double l3, double l4, double lam) {
  KDWeights w;
  w.lambda1 = l1;
  w.lambda2 = l2;
  w.lambda3 = l3;
  w.lambda4 = l4;
  w.rd_lambda = lam;
  w.loss_form = LossForm::kL2;
  return w;
}

}  // namespace

TEST_CASE("rd_loss: perfect reconstruction means rd equals the rate") {
  Rng rng(21);
  auto o = make_outputs(rng, 8);
  auto x = o.x_hat;  // x_hat == x exactly
  auto r = rd_loss(o, x, 0.025);
  CHECK(r.distortion == 0.0);
  CHECK(r.rd == r.rate_bits);
  CHECK(r.rate_bits > 0.0);
}

TEST_CASE("rd_loss: 1000 half-likelihood latents over 4000 pixels give 0.25 bpp") {
  CompressionOutputs<double> o;
  o.batch = 1;
  o.num_pixels = 4000;
  o.y_likelihoods = Var<double>::constant(Tensor<double>::full({1, 10, 10, 10}, 0.5));
  o.x_hat = Var<double>::constant(Tensor<double>::full({1, 1, 50, 80}, 0.5));
  auto x = o.x_hat;
  auto r = rd_loss(o, x, 0.025);
  CHECK(r.rate_bits == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("rd_loss: rate matches the scalar log-table reference") {
  Rng rng(22);
  for (int it = 0; it < 50; ++it) {
    auto o = make_outputs(rng, 8);
    auto x = Var<double>::constant(random_uniform<double>(rng, {1, 3, 8, 8}, 0.0, 1.0));
    auto r = rd_loss(o, x, 0.0067);
    const double want_rate =
        ref_bpp(o.y_likelihoods.value(), &o.z_likelihoods.value(), 1, o.num_pixels);
    const double want_rd = want_rate + 0.0067 * 255.0 * 255.0 * ref_mse(o.x_hat.value(), x.value());
    CHECK(rel_err(r.rate_bits, want_rate) < 1e-9);
    CHECK(rel_err(r.rd, want_rd) < 1e-9);
  }
}

TEST_CASE("rd_loss rejects likelihoods outside (0,1]") {
  Rng rng(23);
  auto o = make_outputs(rng, 8);
  o.y_likelihoods.mutable_value()[0] = 0.0;
  auto x = o.x_hat;
  CHECK_THROWS_AS(rd_loss(o, x, 0.025), NumericError);
  o.y_likelihoods.mutable_value()[0] = 1.5;
  CHECK_THROWS_AS(rd_loss(o, x, 0.025), NumericError);
}

TEST_CASE("kd_loss_l1: identical student and teacher collapse to the RD term") {
  Rng rng(24);
  auto o = make_outputs(rng, 8);
  // Identical outputs with a mode-consistent latent (y_hat == y).
  o.y_hat = o.y;
  auto x = Var<double>::constant(random_uniform<double>(rng, {1, 3, 8, 8}, 0.0, 1.0));
  auto w = l1_weights(0.2, 0.2, 0.4, 0.025);
  auto b = kd_loss_l1(o, o, x, w);
  CHECK(b.latent_term == 0.0);
  CHECK(b.reconstruction_term == 0.0);
  CHECK(b.total == 0.4 * b.rd_term);
}

TEST_CASE("kd_loss_l1: unit MSE terms and RD=2 give the closed-form total") {
  // Construct outputs where both MSE terms are exactly 1 and the RD term is
  // exactly 2 bpp with zero distortion.
  const int64_t side = 4;  // 16 pixels
  CompressionOutputs<double> s;
  s.batch = 1;
  s.num_pixels = side * side;
  s.y_hat = Var<double>::constant(Tensor<double>::full({1, 2, 2, 2}, 0.0));
  s.x_hat = Var<double>::constant(Tensor<double>::full({1, 3, side, side}, 0.25));
  // 32 latent elements at likelihood 0.5 over 16 pixels -> 2 bpp.
  s.y_likelihoods = Var<double>::constant(Tensor<double>::full({1, 2, 4, 4}, 0.5));

  CompressionOutputs<double> t = s;
  t.y = Var<double>::constant(Tensor<double>::full({1, 2, 2, 2}, 1.0));     // MSE 1
  t.x_hat = Var<double>::constant(Tensor<double>::full({1, 3, side, side}, 1.25));  // MSE 1

  auto x = s.x_hat;  // distortion 0
  auto b = kd_loss_l1(s, t, x, l1_weights(0.2, 0.2, 0.4, 0.025));
  CHECK(b.latent_term == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b.reconstruction_term == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b.rd_term == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(b.total == doctest::Approx(1.2).epsilon(1e-12));
}

TEST_CASE("kd losses match scalar reference computations on random tensors") {
  Rng rng(25);
  for (int it = 0; it < 1000; ++it) {
    auto s = make_outputs(rng, 8);
    auto t = make_outputs(rng, 8);
    auto x = Var<double>::constant(random_uniform<double>(rng, {1, 3, 8, 8}, 0.0, 1.0));
    const double l1 = rng.uniform(0.0, 1.0), l2 = rng.uniform(0.0, 1.0);
    const double l3 = rng.uniform(0.0, 1.0), l4 = rng.uniform(0.0, 1.0);
    const double lam = rng.uniform(0.001, 0.2);

    const double rate = ref_bpp(s.y_likelihoods.value(), &s.z_likelihoods.value(), 1, 64);
    const double rd = rate + lam * 65025.0 * ref_mse(s.x_hat.value(), x.value());
    const double latent = ref_mse(s.y_hat.value(), t.y.value());
    const double hyper = ref_mse(s.z_hat.value(), t.z_hat.value());
    const double recon = ref_mse(s.x_hat.value(), t.x_hat.value());

    auto b1 = kd_loss_l1(s, t, x, l1_weights(l1, l2, l3, lam));
    CHECK(rel_err(b1.total, l1 * latent + l2 * recon + l3 * rd) < 1e-9);
    CHECK(b1.latent_term >= 0.0);
    CHECK(b1.reconstruction_term >= 0.0);
    CHECK(b1.rate_term >= 0.0);

    auto b2 = kd_loss_l2(s, t, x, l2_weights(l1, l2, l3, l4, lam));
    CHECK(rel_err(b2.total, l1 * latent + l2 * hyper + l3 * recon + l4 * rd) < 1e-9);

    // Decomposition invariant: the reported total is the weighted sum of
    // the reported components.
    const double recombined = l1 * b2.latent_term + l2 * b2.hyper_latent_term +
                              l3 * b2.reconstruction_term + *l2_weights(l1, l2, l3, l4, lam).lambda4 * b2.rd_term;
    CHECK(rel_err(b2.total, recombined) < 1e-6);

    auto t2 = make_outputs(rng, 8);
    auto bh = hybrid_kd_loss(s, t, t2, x, l2_weights(l1, l2, l3, l4, lam));
    const double hyper_b = ref_mse(s.z_hat.value(), t2.z_hat.value());
    CHECK(rel_err(bh.total, l1 * latent + l2 * hyper_b + l3 * recon + l4 * rd) < 1e-9);
  }
}

TEST_CASE("kd_loss_l2 with zero hyper weight reduces to kd_loss_l1") {
  Rng rng(26);
  auto s = make_outputs(rng, 8);
  auto t = make_outputs(rng, 8);
  auto x = Var<double>::constant(random_uniform<double>(rng, {1, 3, 8, 8}, 0.0, 1.0));
  auto b2 = kd_loss_l2(s, t, x, l2_weights(0.3, 0.0, 0.5, 0.7, 0.013));
  auto b1 = kd_loss_l1(s, t, x, l1_weights(0.3, 0.5, 0.7, 0.013));
  CHECK(b2.total == b1.total);
}

TEST_CASE("hybrid loss: same teacher twice equals L2; zero hyper weight ignores teacher B") {
  Rng rng(27);
  auto s = make_outputs(rng, 8);
  auto ta = make_outputs(rng, 8);
  auto tb = make_outputs(rng, 8);
  auto x = Var<double>::constant(random_uniform<double>(rng, {1, 3, 8, 8}, 0.0, 1.0));
  auto w = l2_weights(0.2, 0.2, 0.2, 0.4, 0.025);

  CHECK(hybrid_kd_loss(s, ta, ta, x, w).total == kd_loss_l2(s, ta, x, w).total);

  auto w0 = l2_weights(0.2, 0.0, 0.2, 0.4, 0.025);
  CHECK(hybrid_kd_loss(s, ta, tb, x, w0).total == hybrid_kd_loss(s, ta, ta, x, w0).total);
}

TEST_CASE("total is affine in each lambda with the unweighted term as slope") {
  Rng rng(28);
  auto s = make_outputs(rng, 8);
  auto t = make_outputs(rng, 8);
  auto x = Var<double>::constant(random_uniform<double>(rng, {1, 3, 8, 8}, 0.0, 1.0));
  const double base = 0.37;
  auto b0 = kd_loss_l1(s, t, x, l1_weights(base, 0.2, 0.4, 0.025));
  auto b1 = kd_loss_l1(s, t, x, l1_weights(base + 1.0, 0.2, 0.4, 0.025));
  CHECK(rel_err(b1.total - b0.total, b0.latent_term) < 1e-9);

  auto c0 = kd_loss_l1(s, t, x, l1_weights(0.2, base, 0.4, 0.025));
  auto c1 = kd_loss_l1(s, t, x, l1_weights(0.2, base + 1.0, 0.4, 0.025));
  CHECK(rel_err(c1.total - c0.total, c0.reconstruction_term) < 1e-9);
}

TEST_CASE("KL latent divergence: zero for identical inputs, positive otherwise") {
  Rng rng(29);
  auto s = make_outputs(rng, 8);
  auto t = make_outputs(rng, 8);
  t.y = s.y_hat;  // same latent target as the student's
  auto x = Var<double>::constant(random_uniform<double>(rng, {1, 3, 8, 8}, 0.0, 1.0));
  auto w = l1_weights(1.0, 0.0, 0.0, 0.025);
  w.latent_divergence = LatentDivergence::kKl;
  auto b = kd_loss_l1(s, t, x, w);
  CHECK(b.latent_term == doctest::Approx(0.0).epsilon(1e-15));

  t.y = Var<double>::constant(random_uniform<double>(rng, {1, 3, 4, 4}, -4.0, 4.0));
  auto b2 = kd_loss_l1(s, t, x, w);
  CHECK(b2.latent_term > 0.0);
}

TEST_CASE("KL latent divergence gradients match finite differences") {
  Rng rng(30);
  auto ys = Var<double>::param(random_uniform<double>(rng, {1, 2, 3, 3}, -2.0, 2.0));
  Tensor<double> yt = random_uniform<double>(rng, {1, 2, 3, 3}, -2.0, 2.0);
  auto make = [&]() { return loss_detail::latent_kl(ys, yt).second; };
  auto res = kdlic::testing::grad_check({ys}, make, 12);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("shape mismatches raise distillation-compatibility errors") {
  Rng rng(31);
  auto s = make_outputs(rng, 8);
  auto t = make_outputs(rng, 8);
  t.y = Var<double>::constant(Tensor<double>({1, 4, 4, 4}));
  auto x = Var<double>::constant(random_uniform<double>(rng, {1, 3, 8, 8}, 0.0, 1.0));
  CHECK_THROWS_AS(kd_loss_l1(s, t, x, l1_weights(0.2, 0.2, 0.4, 0.025)), CompatibilityError);

  auto t2 = make_outputs(rng, 8);
  t2.z_hat = Var<double>::constant(Tensor<double>({1, 5, 2, 2}));
  CHECK_THROWS_AS(kd_loss_l2(s, t2, x, l2_weights(0.2, 0.2, 0.2, 0.4, 0.025)), CompatibilityError);
}

TEST_CASE("weights validation") {
  KDWeights w;
  w.loss_form = LossForm::kL2;  // lambda4 missing
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w.loss_form = LossForm::kL1;
  w.lambda1 = -0.1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w.lambda1 = 0.1;
  w.rd_lambda = 0.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("L1 gradients flow to the student only") {
  ModelConfig sc, tc;
  sc.channels_n = 6;
  sc.latent_m = 8;
  sc.hyper_out_channels = 6;
  sc.init_seed = 3;
  tc = sc;
  tc.channels_n = 10;
  tc.hyper_out_channels = 10;
  tc.init_seed = 4;
  tc.role = ModelRole::kTeacher;
  ScaleHyperprior<float> student(sc), teacher(tc);

  Rng rng(32);
  auto x = Var<float>::constant(random_uniform<float>(rng, {1, 3, 64, 64}, 0.0, 1.0));
  auto t_out = teacher.forward(x, ForwardMode::kEval);
  auto s_out = student.forward(x, ForwardMode::kTrain, 77);

  KDWeights w;
  auto b = kd_loss_l1(s_out, t_out, x, w);
  b.total_var.backward();

  int64_t nonzero = 0, with_grad = 0;
  for (const auto& p : student.parameters()) {
    if (p.var.has_grad()) {
      ++with_grad;
      for (int64_t i = 0; i < p.var.grad().numel(); ++i) {
        if (p.var.grad()[i] != 0.0f) {
          ++nonzero;
          break;
        }
      }
    }
  }
  CHECK(with_grad > 0);
  CHECK(nonzero > 20);  // bulk of tensors receive gradient
  for (const auto& p : teacher.parameters()) CHECK_FALSE(p.var.has_grad());
}
