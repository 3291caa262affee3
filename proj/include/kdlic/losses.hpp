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
#include <optional>
#include <string>

#include "kdlic/model.hpp"

// Rate-distortion and distillation objectives.
//
// The distillation losses supervise a student with a frozen teacher:
//   L1 = l1*MSE(y_s, y_t) + l2*MSE(x_s, x_t) + l3*RD(y_s, x_s, x)
//   L2 = l1*MSE(y_s, y_t) + l2*MSE(z_s, z_t) + l3*MSE(x_s, x_t) + l4*RD(...)
// with RD(y, x_hat, x) = bpp + lambda * 255^2 * MSE(x_hat, x), the rate
// estimated as the negative log-likelihood of the (hyper-)latents.
//
// Teacher targets come from an eval-mode (rounded) pass, except the latent
// target which uses the teacher's pre-quantization latent so the student
// is not asked to match a particular noise draw. Reported values are
// accumulated in double with plain left-to-right summation so they are
// directly comparable against scalar reference computations.

namespace kdlic {

enum class LossForm { kL1, kL2 };
enum class LatentDivergence { kMse, kKl };

/// Distillation/RD trade-off weights.
struct KDWeights {
  double lambda1 = 0.2;
  double lambda2 = 0.2;
  double lambda3 = 0.4;
  std::optional<double> lambda4;
  double rd_lambda = 0.025;
  LossForm loss_form = LossForm::kL1;
  LatentDivergence latent_divergence = LatentDivergence::kMse;

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || (lambda4 && *lambda4 < 0)) {
      throw ConfigError("KDWeights: lambda weights must be non-negative");
    }
    if (rd_lambda <= 0) throw ConfigError("KDWeights: rd_lambda must be positive");
    if ((loss_form == LossForm::kL2) != lambda4.has_value()) {
      throw ConfigError("KDWeights: lambda4 must be present exactly when loss_form is L2");
    }
  }
};

/// Diagnostic decomposition of a loss evaluation. Scalar values are double
/// precision; total_var carries the differentiable total.
template <typename S>
struct LossBreakdown {
  double total = 0;
  double latent_term = 0;
  double hyper_latent_term = 0;
  double reconstruction_term = 0;
  double rate_term = 0;        // bits per pixel
  double distortion_term = 0;  // MSE on the [0,1] scale
  double rd_term = 0;
  Var<S> total_var;
};

template <typename S>
struct RdLossResult {
  double rd = 0;
  double rate_bits = 0;  // bits per pixel
  double distortion = 0;
  Var<S> rd_var;
};

namespace loss_detail {

template <typename S>
double mse_value(const Tensor<S>& a, const Tensor<S>& b) {
  double acc = 0;
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

template <typename S>
double neg_log2_sum(const Tensor<S>& lik) {
  constexpr double kInvLn2 = 1.4426950408889634074;
  double acc = 0;
  for (int64_t i = 0; i < lik.numel(); ++i) {
    const double l = static_cast<double>(lik[i]);
    if (!(l > 0.0) || l > 1.0) {
      throw NumericError("likelihood outside (0,1]: " + std::to_string(l));
    }
    acc += -std::log(l) * kInvLn2;
  }
  return acc;
}

/// KL(student || teacher) between per-channel spatial softmax distributions,
/// averaged over (batch, channel). Returns the double value and builds the
/// differentiable node for the student side.
template <typename S>
std::pair<double, Var<S>> latent_kl(const Var<S>& student_latent, const Tensor<S>& teacher_latent) {
  const auto& sh = student_latent.value().shape();
  const int64_t R = sh[0] * sh[1], C = sh[2] * sh[3];

  auto ls_s = ops::log_softmax_rows(ops::reshape(student_latent, {R, C}));
  auto ls_t = ops::log_softmax_rows(
      Var<S>::constant(teacher_latent.reshaped({R, C})));
  auto kl = ops::mul_scalar(
      ops::sum_all(ops::mul(ops::exp_op(ls_s), ops::sub(ls_s, ls_t))), S(1.0 / double(R)));

  // Double-precision value with the same construction.
  double total = 0;
  const auto& sv = student_latent.value();
  const auto& tv = teacher_latent;
  std::vector<double> srow(static_cast<size_t>(C)), trow(static_cast<size_t>(C));
  for (int64_t r = 0; r < R; ++r) {
    double smax = -1e300, tmax = -1e300;
    for (int64_t j = 0; j < C; ++j) {
      smax = std::max(smax, static_cast<double>(sv[r * C + j]));
      tmax = std::max(tmax, static_cast<double>(tv[r * C + j]));
    }
    double ssum = 0, tsum = 0;
    for (int64_t j = 0; j < C; ++j) {
      srow[j] = std::exp(static_cast<double>(sv[r * C + j]) - smax);
      trow[j] = std::exp(static_cast<double>(tv[r * C + j]) - tmax);
      ssum += srow[j];
      tsum += trow[j];
    }
    for (int64_t j = 0; j < C; ++j) {
      const double ps = srow[j] / ssum;
      const double pt = trow[j] / tsum;
      total += ps * (std::log(ps) - std::log(pt));
    }
  }
  return {total / static_cast<double>(R), kl};
}

}  // namespace loss_detail

/// Rate-distortion cost: bits per pixel plus lambda-weighted 255^2-scaled
/// MSE. Works on any CompressionOutputs whose likelihood fields are set;
/// an undefined/empty hyper-latent likelihood contributes no rate.
template <typename S>
RdLossResult<S> rd_loss(const CompressionOutputs<S>& out, const Var<S>& x, double rd_lambda) {
  if (!out.y_likelihoods.defined()) throw PreconditionError("rd_loss: missing y likelihoods");
  if (!out.x_hat.value().same_shape(x.value())) {
    throw ShapeError("rd_loss: reconstruction/input shape mismatch");
  }
  const int64_t batch = out.batch > 0 ? out.batch : x.value().dim(0);
  const int64_t pixels = out.num_pixels > 0 ? out.num_pixels : x.value().dim(2) * x.value().dim(3);
  const double denom = static_cast<double>(batch) * static_cast<double>(pixels);

  RdLossResult<S> res;
  const bool has_z = out.z_likelihoods.defined() && out.z_likelihoods.value().numel() > 0;
  res.rate_bits = loss_detail::neg_log2_sum(out.y_likelihoods.value());
  if (has_z) res.rate_bits += loss_detail::neg_log2_sum(out.z_likelihoods.value());
  res.rate_bits /= denom;
  res.distortion = loss_detail::mse_value(out.x_hat.value(), x.value());
  res.rd = res.rate_bits + rd_lambda * 255.0 * 255.0 * res.distortion;

  constexpr double kInvLn2 = 1.4426950408889634074;
  auto bits = ops::sum_all(ops::log_op(out.y_likelihoods));
  if (has_z) bits = ops::add(bits, ops::sum_all(ops::log_op(out.z_likelihoods)));
  auto rate_var = ops::mul_scalar(bits, static_cast<S>(-kInvLn2 / denom));
  auto mse_var = ops::mse(out.x_hat, x);
  res.rd_var = ops::add(rate_var, ops::mul_scalar(mse_var, static_cast<S>(rd_lambda * 255.0 * 255.0)));
  return res;
}

namespace loss_detail {

template <typename S>
void check_compatible(const Tensor<S>& s, const Tensor<S>& t, const char* what) {
  if (!s.same_shape(t)) {
    throw CompatibilityError(std::string("distillation: student/teacher ") + what +
                             " shapes differ: " + s.shape_str() + " vs " + t.shape_str());
  }
}

}  // namespace loss_detail

/// Latent + reconstruction distillation with an RD anchor (the L1 form).
template <typename S>
LossBreakdown<S> kd_loss_l1(const CompressionOutputs<S>& student,
                            const CompressionOutputs<S>& teacher, const Var<S>& x,
                            const KDWeights& w) {
  w.validate();
  if (w.loss_form != LossForm::kL1) throw ConfigError("kd_loss_l1 called with L2 weights");
  loss_detail::check_compatible(student.y_hat.value(), teacher.y.value(), "latent");
  loss_detail::check_compatible(student.x_hat.value(), teacher.x_hat.value(), "reconstruction");

  LossBreakdown<S> b;
  Var<S> latent_var;
  if (w.latent_divergence == LatentDivergence::kKl) {
    auto [v, var] = loss_detail::latent_kl(student.y_hat, teacher.y.value());
    b.latent_term = v;
    latent_var = var;
  } else {
    b.latent_term = loss_detail::mse_value(student.y_hat.value(), teacher.y.value());
    latent_var = ops::mse(student.y_hat, teacher.y.detach());
  }
  b.reconstruction_term = loss_detail::mse_value(student.x_hat.value(), teacher.x_hat.value());
  auto recon_var = ops::mse(student.x_hat, teacher.x_hat.detach());

  auto rd = rd_loss(student, x, w.rd_lambda);
  b.rate_term = rd.rate_bits;
  b.distortion_term = rd.distortion;
  b.rd_term = rd.rd;
  b.total = w.lambda1 * b.latent_term + w.lambda2 * b.reconstruction_term + w.lambda3 * b.rd_term;
  b.total_var = ops::add(
      ops::add(ops::mul_scalar(latent_var, static_cast<S>(w.lambda1)),
               ops::mul_scalar(recon_var, static_cast<S>(w.lambda2))),
      ops::mul_scalar(rd.rd_var, static_cast<S>(w.lambda3)));
  return b;
}

/// L1 extended with hyper-latent distillation (the L2 form).
template <typename S>
LossBreakdown<S> kd_loss_l2(const CompressionOutputs<S>& student,
                            const CompressionOutputs<S>& teacher, const Var<S>& x,
                            const KDWeights& w) {
  w.validate();
  if (w.loss_form != LossForm::kL2) throw ConfigError("kd_loss_l2 called with L1 weights");
  loss_detail::check_compatible(student.y_hat.value(), teacher.y.value(), "latent");
  loss_detail::check_compatible(student.z_hat.value(), teacher.z_hat.value(), "hyper-latent");
  loss_detail::check_compatible(student.x_hat.value(), teacher.x_hat.value(), "reconstruction");

  LossBreakdown<S> b;
  Var<S> latent_var;
  if (w.latent_divergence == LatentDivergence::kKl) {
    auto [v, var] = loss_detail::latent_kl(student.y_hat, teacher.y.value());
    b.latent_term = v;
    latent_var = var;
  } else {
    b.latent_term = loss_detail::mse_value(student.y_hat.value(), teacher.y.value());
    latent_var = ops::mse(student.y_hat, teacher.y.detach());
  }
  b.hyper_latent_term = loss_detail::mse_value(student.z_hat.value(), teacher.z_hat.value());
  auto hyper_var = ops::mse(student.z_hat, teacher.z_hat.detach());
  b.reconstruction_term = loss_detail::mse_value(student.x_hat.value(), teacher.x_hat.value());
  auto recon_var = ops::mse(student.x_hat, teacher.x_hat.detach());

  auto rd = rd_loss(student, x, w.rd_lambda);
  b.rate_term = rd.rate_bits;
  b.distortion_term = rd.distortion;
  b.rd_term = rd.rd;
  const double l4 = *w.lambda4;
  b.total = w.lambda1 * b.latent_term + w.lambda2 * b.hyper_latent_term +
            w.lambda3 * b.reconstruction_term + l4 * b.rd_term;
  b.total_var =
      ops::add(ops::add(ops::mul_scalar(latent_var, static_cast<S>(w.lambda1)),
                        ops::mul_scalar(hyper_var, static_cast<S>(w.lambda2))),
               ops::add(ops::mul_scalar(recon_var, static_cast<S>(w.lambda3)),
                        ops::mul_scalar(rd.rd_var, static_cast<S>(l4))));
  return b;
}

/// Two-teacher composition: teacher_a supplies latent and reconstruction
/// targets, teacher_b supplies the hyper-latent target.
template <typename S>
LossBreakdown<S> hybrid_kd_loss(const CompressionOutputs<S>& student,
                                const CompressionOutputs<S>& teacher_a,
                                const CompressionOutputs<S>& teacher_b, const Var<S>& x,
                                const KDWeights& w) {
  CompressionOutputs<S> merged = teacher_a;
  merged.z_hat = teacher_b.z_hat;
  merged.z = teacher_b.z;
  return kd_loss_l2(student, merged, x, w);
}

}  // namespace kdlic
