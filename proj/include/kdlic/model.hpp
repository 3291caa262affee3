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
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kdlic/entropy.hpp"
#include "kdlic/layers.hpp"

namespace kdlic {

enum class ModelRole { kTeacher, kStudent };
enum class ForwardMode { kTrain, kEval };

/// Architecture hyperparameters of the scale-hyperprior codec.
struct ModelConfig {
  int64_t channels_n = 128;        // conv width N
  int64_t latent_m = 192;          // latent channels M
  int64_t hyper_out_channels = 0;  // last hyper-encoder layer; 0 -> mirrors N
  ModelRole role = ModelRole::kStudent;
  uint64_t init_seed = 0;

  int64_t hyper() const { return hyper_out_channels > 0 ? hyper_out_channels : channels_n; }

  void validate() const {
    if (channels_n < 1) throw ConfigError("ModelConfig.channels_n must be >= 1");
    if (latent_m < 1) throw ConfigError("ModelConfig.latent_m must be >= 1");
    if (hyper_out_channels < 0) throw ConfigError("ModelConfig.hyper_out_channels must be >= 0");
  }
};

/// One forward pass: reconstruction, (noisy|rounded) latents and their
/// per-element interval masses, plus the pre-quantization latents used as
/// noise-free distillation targets.
template <typename S>
struct CompressionOutputs {
  Var<S> x_hat;
  Var<S> y_hat;
  Var<S> z_hat;
  Var<S> y_likelihoods;
  Var<S> z_likelihoods;
  Var<S> y;  // pre-quantization latent
  Var<S> z;  // pre-quantization hyper-latent

  int64_t num_pixels = 0;  // unpadded pixels per image
  int64_t batch = 0;
};

// Layer inventory used for analytic FLOP counting.
enum class LayerKind { kConv, kDeconv, kGdn };
enum class NetPath { kMainEnc, kMainDec, kHyperEnc, kHyperDec };

struct LayerDesc {
  LayerKind kind;
  NetPath path;
  int64_t in_ch, out_ch, kernel, stride;
};

/// Scale-hyperprior compression model: 4-stage strided analysis/synthesis
/// transforms with (inverse) GDN, a 3-layer hyper codec predicting the
/// latent's Gaussian scales, a learned factorized prior over the
/// hyper-latent, and the train-noise / eval-round switch.
template <typename S>
class ScaleHyperprior {
 public:
  static constexpr int64_t kStrideMultiple = 64;  // 4 stride-2 stages on each path

  explicit ScaleHyperprior(const ModelConfig& config) : config_(config) {
    config.validate();
    Rng rng = Rng::derive(config.init_seed, 0xa11c, 0x5eed);
    const int64_t N = config.channels_n, M = config.latent_m, Hc = config.hyper();

    g_a_ = {Conv2dLayer<S>::make(rng, 3, N, 5, 2, 2), Conv2dLayer<S>::make(rng, N, N, 5, 2, 2),
            Conv2dLayer<S>::make(rng, N, N, 5, 2, 2), Conv2dLayer<S>::make(rng, N, M, 5, 2, 2)};
    for (int i = 0; i < 3; ++i) g_a_gdn_.push_back(GdnLayer<S>::make(N, false));

    g_s_ = {ConvTranspose2dLayer<S>::make(rng, M, N, 5, 2, 2, 1),
            ConvTranspose2dLayer<S>::make(rng, N, N, 5, 2, 2, 1),
            ConvTranspose2dLayer<S>::make(rng, N, N, 5, 2, 2, 1),
            ConvTranspose2dLayer<S>::make(rng, N, 3, 5, 2, 2, 1)};
    for (int i = 0; i < 3; ++i) g_s_gdn_.push_back(GdnLayer<S>::make(N, true));

    h_a_ = {Conv2dLayer<S>::make(rng, M, N, 3, 1, 1), Conv2dLayer<S>::make(rng, N, N, 5, 2, 2),
            Conv2dLayer<S>::make(rng, N, Hc, 5, 2, 2)};
    h_s_deconv_ = {ConvTranspose2dLayer<S>::make(rng, Hc, N, 5, 2, 2, 1),
                   ConvTranspose2dLayer<S>::make(rng, N, N, 5, 2, 2, 1)};
    h_s_conv_ = Conv2dLayer<S>::make(rng, N, M, 3, 1, 1);

    prior_ = FactorizedPrior<S>::make(rng, Hc);
    collect_params();
  }

  const ModelConfig& config() const { return config_; }

  /// Run the codec. Train mode perturbs latents with uniform noise drawn
  /// from (noise_seed); eval mode rounds and builds no gradient tape.
  CompressionOutputs<S> forward(const Var<S>& x, ForwardMode mode, uint64_t noise_seed = 0) const {
    std::optional<NoGradGuard> guard;
    if (mode == ForwardMode::kEval) guard.emplace();
    const auto& sh = x.value().shape();
    if (sh.size() != 4 || sh[1] != 3) throw ShapeError("forward expects (B,3,H,W) input");
    for (int64_t i = 0; i < x.value().numel(); ++i) {
      if (!std::isfinite(static_cast<double>(x.value()[i]))) {
        throw NumericError("forward: non-finite input value");
      }
    }
    const int64_t B = sh[0], H = sh[2], W = sh[3];
    if (H < 2 || W < 2) throw ShapeError("forward: input sides must be >= 2");

    const int64_t Hp = round_up(H, kStrideMultiple), Wp = round_up(W, kStrideMultiple);
    Var<S> xp = (Hp != H || Wp != W) ? ops::reflection_pad2d(x, 0, Hp - H, 0, Wp - W) : x;

    CompressionOutputs<S> out;
    out.num_pixels = H * W;
    out.batch = B;

    // Analysis
    Var<S> t = xp;
    for (int i = 0; i < 4; ++i) {
      t = g_a_[i](t);
      if (i < 3) t = g_a_gdn_[i](t);
    }
    out.y = t;

    // Hyper analysis on |y|
    Var<S> h = ops::abs_op(out.y);
    h = ops::relu(h_a_[0](h));
    h = ops::relu(h_a_[1](h));
    out.z = h_a_[2](h);

    // Quantization switch
    if (mode == ForwardMode::kTrain) {
      Rng rng_y = Rng::derive(noise_seed, 0x79, 0);
      Rng rng_z = Rng::derive(noise_seed, 0x7a, 1);
      out.y_hat = ops::add_noise(out.y, random_uniform<S>(rng_y, out.y.value().shape(), -0.5, 0.5));
      out.z_hat = ops::add_noise(out.z, random_uniform<S>(rng_z, out.z.value().shape(), -0.5, 0.5));
    } else {
      out.y_hat = ops::round_detached(out.y);
      out.z_hat = ops::round_detached(out.z);
    }

    out.z_likelihoods = prior_.likelihood(out.z_hat);

    // Hyper synthesis -> scales
    Var<S> s = out.z_hat;
    s = ops::relu(h_s_deconv_[0](s));
    s = ops::relu(h_s_deconv_[1](s));
    s = ops::relu(h_s_conv_(s));
    out.y_likelihoods = GaussianConditional<S>::likelihood(out.y_hat, s);

    // Synthesis
    Var<S> r = out.y_hat;
    for (int i = 0; i < 4; ++i) {
      r = g_s_[i](r);
      if (i < 3) r = g_s_gdn_[i](r);
    }
    if (Hp != H || Wp != W) r = ops::crop2d(r, 0, 0, H, W);
    out.x_hat = (mode == ForwardMode::kEval) ? clamp01(r) : r;
    return out;
  }

  const ParamList<S>& parameters() const { return params_; }

  int64_t count_parameters() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.var.value().numel();
    return n;
  }

  int64_t memory_bytes() const { return count_parameters() * static_cast<int64_t>(sizeof(S)); }

  Var<S> aux_loss() const { return prior_.aux_loss(); }
  const Var<S>& quantiles() const { return prior_.quantiles; }

  /// Architecture inventory for analytic profiling.
  std::vector<LayerDesc> layer_manifest() const {
    const int64_t N = config_.channels_n, M = config_.latent_m, Hc = config_.hyper();
    std::vector<LayerDesc> out;
    out.push_back({LayerKind::kConv, NetPath::kMainEnc, 3, N, 5, 2});
    out.push_back({LayerKind::kGdn, NetPath::kMainEnc, N, N, 1, 1});
    out.push_back({LayerKind::kConv, NetPath::kMainEnc, N, N, 5, 2});
    out.push_back({LayerKind::kGdn, NetPath::kMainEnc, N, N, 1, 1});
    out.push_back({LayerKind::kConv, NetPath::kMainEnc, N, N, 5, 2});
    out.push_back({LayerKind::kGdn, NetPath::kMainEnc, N, N, 1, 1});
    out.push_back({LayerKind::kConv, NetPath::kMainEnc, N, M, 5, 2});

    out.push_back({LayerKind::kDeconv, NetPath::kMainDec, M, N, 5, 2});
    out.push_back({LayerKind::kGdn, NetPath::kMainDec, N, N, 1, 1});
    out.push_back({LayerKind::kDeconv, NetPath::kMainDec, N, N, 5, 2});
    out.push_back({LayerKind::kGdn, NetPath::kMainDec, N, N, 1, 1});
    out.push_back({LayerKind::kDeconv, NetPath::kMainDec, N, N, 5, 2});
    out.push_back({LayerKind::kGdn, NetPath::kMainDec, N, N, 1, 1});
    out.push_back({LayerKind::kDeconv, NetPath::kMainDec, N, 3, 5, 2});

    out.push_back({LayerKind::kConv, NetPath::kHyperEnc, M, N, 3, 1});
    out.push_back({LayerKind::kConv, NetPath::kHyperEnc, N, N, 5, 2});
    out.push_back({LayerKind::kConv, NetPath::kHyperEnc, N, Hc, 5, 2});

    out.push_back({LayerKind::kDeconv, NetPath::kHyperDec, Hc, N, 5, 2});
    out.push_back({LayerKind::kDeconv, NetPath::kHyperDec, N, N, 5, 2});
    out.push_back({LayerKind::kConv, NetPath::kHyperDec, N, M, 3, 1});
    return out;
  }

  static int64_t round_up(int64_t v, int64_t m) { return (v + m - 1) / m * m; }

 private:
  static Var<S> clamp01(const Var<S>& a) {
    Tensor<S> out(a.value().shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
      out[i] = std::min(std::max(a.value()[i], S(0)), S(1));
    }
    return Var<S>::result(std::move(out), {a}, [a](typename Var<S>::Node& n) {
      if (!a.requires_grad()) return;
      Tensor<S> ga(n.grad.shape());
      for (int64_t i = 0; i < ga.numel(); ++i) {
        const S x = a.value()[i];
        ga[i] = (x >= S(0) && x <= S(1)) ? n.grad[i] : S(0);
      }
      Var<S>::accumulate(a, ga);
    });
  }

  void collect_params() {
    params_.clear();
    for (int i = 0; i < 4; ++i) {
      g_a_[i].register_params(params_, "g_a." + std::to_string(2 * i));
      if (i < 3) g_a_gdn_[i].register_params(params_, "g_a." + std::to_string(2 * i + 1));
    }
    for (int i = 0; i < 4; ++i) {
      g_s_[i].register_params(params_, "g_s." + std::to_string(2 * i));
      if (i < 3) g_s_gdn_[i].register_params(params_, "g_s." + std::to_string(2 * i + 1));
    }
    for (int i = 0; i < 3; ++i) h_a_[i].register_params(params_, "h_a." + std::to_string(2 * i));
    h_s_deconv_[0].register_params(params_, "h_s.0");
    h_s_deconv_[1].register_params(params_, "h_s.2");
    h_s_conv_.register_params(params_, "h_s.4");
    prior_.register_params(params_, "entropy_bottleneck");
  }

  ModelConfig config_;
  std::vector<Conv2dLayer<S>> g_a_;
  std::vector<GdnLayer<S>> g_a_gdn_;
  std::vector<ConvTranspose2dLayer<S>> g_s_;
  std::vector<GdnLayer<S>> g_s_gdn_;
  std::vector<Conv2dLayer<S>> h_a_;
  std::vector<ConvTranspose2dLayer<S>> h_s_deconv_;
  Conv2dLayer<S> h_s_conv_;
  FactorizedPrior<S> prior_;
  ParamList<S> params_;
};

template <typename S>
std::unique_ptr<ScaleHyperprior<S>> build_model(const ModelConfig& config) {
  config.validate();
  return std::make_unique<ScaleHyperprior<S>>(config);
}

}  // namespace kdlic
