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

#include "kdlic/metrics.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "kdlic/version.hpp"

using nlohmann::json;

namespace kdlic {

double mse01(const Tensor<float>& a, const Tensor<float>& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("mse: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  double acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return acc / double(a.numel());
}

double psnr(const Tensor<float>& x, const Tensor<float>& x_hat) {
  const double mse = mse01(x, x_hat);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const Image8& x, const Image8& x_hat) {
  if (x.width != x_hat.width || x.height != x_hat.height) {
    throw ShapeError("psnr: image dimensions differ");
  }
  double acc = 0;
  for (size_t i = 0; i < x.rgb.size(); ++i) {
    const double d = (double(x.rgb[i]) - double(x_hat.rgb[i])) / 255.0;
    acc += d * d;
  }
  const double mse = acc / double(x.rgb.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double msssim(const Image8& x, const Image8& x_hat) {
  return msssim(image_to_tensor(x), image_to_tensor(x_hat));
}

double estimate_bpp(const CompressionOutputs<float>& outputs, int64_t num_pixels) {
  if (num_pixels <= 0) throw PreconditionError("estimate_bpp: num_pixels must be positive");
  if (!outputs.y_likelihoods.defined()) throw PreconditionError("estimate_bpp: missing likelihoods");
  double bits = 0;
  const auto& y = outputs.y_likelihoods.value();
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double l = double(y[i]);
    if (!(l > 0.0) || l > 1.0) throw NumericError("estimate_bpp: likelihood outside (0,1]");
    bits += -std::log2(l);
  }
  if (outputs.z_likelihoods.defined()) {
    const auto& z = outputs.z_likelihoods.value();
    for (int64_t i = 0; i < z.numel(); ++i) {
      const double l = double(z[i]);
      if (!(l > 0.0) || l > 1.0) throw NumericError("estimate_bpp: likelihood outside (0,1]");
      bits += -std::log2(l);
    }
  }
  return bits / double(num_pixels);
}

RDPoint evaluate_model(const ScaleHyperprior<float>& model, const std::vector<EvalImage>& eval_set,
                       const std::string& label) {
  if (eval_set.empty()) throw PreconditionError("evaluate_model: eval set is empty");
  RDPoint p;
  p.label = label;
  int64_t msssim_count = 0;
  for (const auto& ei : eval_set) {
    try {
      auto x_t = image_to_tensor(ei.image);
      auto x = Var<float>::constant(x_t);
      auto out = model.forward(x, ForwardMode::kEval);
      p.bpp += estimate_bpp(out, ei.image.pixels());
      p.psnr += psnr(x_t, out.x_hat.value());
      if (ei.image.width >= kMsssimMinSide && ei.image.height >= kMsssimMinSide) {
        p.msssim += msssim(x_t, out.x_hat.value());
        ++msssim_count;
      }
    } catch (const Error& e) {
      throw Error("evaluate_model failed on " + ei.name + ": " + e.what());
    }
  }
  const double n = double(eval_set.size());
  p.bpp /= n;
  p.psnr /= n;
  p.msssim = msssim_count > 0 ? p.msssim / double(msssim_count) : 0.0;
  return p;
}

void save_rd_results(const std::string& path, const RDCurve& curve, const ResultsMeta& meta) {
  json j;
  j["schema"] = kResultsSchema;
  j["model_id"] = curve.model_id;
  j["config_hash"] = meta.config_hash;
  j["commit"] = meta.commit;
  j["points"] = json::array();
  for (const auto& p : curve.points) {
    j["points"].push_back(
        {{"bpp", p.bpp}, {"psnr", p.psnr}, {"msssim", p.msssim}, {"label", p.label}});
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write results file: " + path);
  f << j.dump(2) << "\n";
}

RDCurve load_rd_results(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open results file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError("results file " + path + ": " + e.what());
  }
  const int schema = j.value("schema", 0);
  if (schema != kResultsSchema) {
    throw ParseError("results file " + path + ": schema " + std::to_string(schema) +
                     " unsupported (expected " + std::to_string(kResultsSchema) + ")");
  }
  RDCurve c;
  c.model_id = j.value("model_id", "");
  for (const auto& jp : j.at("points")) {
    RDPoint p;
    p.bpp = jp.at("bpp").get<double>();
    p.psnr = jp.at("psnr").get<double>();
    p.msssim = jp.value("msssim", 0.0);
    p.label = jp.value("label", "");
    c.points.push_back(std::move(p));
  }
  return c;
}

}  // namespace kdlic
