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

#include <string>
#include <vector>

#include "kdlic/data.hpp"
#include "kdlic/model.hpp"

namespace kdlic {

// PSNR of identical images is capped here instead of going infinite.
inline constexpr double kPsnrCap = 100.0;

// MS-SSIM needs 5 dyadic scales of an 11-tap window.
inline constexpr int64_t kMsssimMinSide = 160;

/// One (bit rate, quality) measurement.
struct RDPoint {
  double bpp = 0;
  double psnr = 0;
  double msssim = 0;
  std::string label;
};

struct RDCurve {
  std::vector<RDPoint> points;
  std::string model_id;
};

/// Mean squared error between same-shaped (1,3,H,W) tensors on the [0,1]
/// scale, accumulated in double.
double mse01(const Tensor<float>& a, const Tensor<float>& b);

/// 10*log10(1/MSE) on the [0,1] scale; exact match returns the 100 dB cap.
double psnr(const Tensor<float>& x, const Tensor<float>& x_hat);
double psnr(const Image8& x, const Image8& x_hat);

/// 5-scale MS-SSIM with the canonical scale weights
/// (0.0448, 0.2856, 0.3001, 0.2363, 0.1333); channels averaged.
double msssim(const Tensor<float>& x, const Tensor<float>& x_hat);
double msssim(const Image8& x, const Image8& x_hat);

/// Likelihood-estimated bits per pixel of one eval-mode forward pass.
double estimate_bpp(const CompressionOutputs<float>& outputs, int64_t num_pixels);

/// Eval-mode forward over the full set; arithmetic means of bpp / PSNR /
/// MS-SSIM (MS-SSIM skipped for images below the minimum side, reported
/// as 0 when no image qualifies).
RDPoint evaluate_model(const ScaleHyperprior<float>& model, const std::vector<EvalImage>& eval_set,
                       const std::string& label = "");

/// Metadata carried by RD results files.
struct ResultsMeta {
  std::string config_hash;
  std::string commit;
};

void save_rd_results(const std::string& path, const RDCurve& curve, const ResultsMeta& meta = {});
RDCurve load_rd_results(const std::string& path);

}  // namespace kdlic
