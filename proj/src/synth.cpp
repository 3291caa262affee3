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

#include "kdlic/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "kdlic/tensor.hpp"

namespace kdlic {

Image8 synth_image(uint64_t seed, int64_t width, int64_t height, double noise) {
  Rng rng = Rng::derive(seed, 0x1a6e, 0);
  Image8 img;
  img.width = width;
  img.height = height;
  img.rgb.resize(static_cast<size_t>(width * height * 3));

  double fx[3][3], fy[3][3], ph[3][3], amp[3][3], base[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.25, 0.75);
    for (int k = 0; k < 3; ++k) {
      fx[c][k] = rng.uniform(0.5, 3.0) * 2.0 * M_PI / double(width);
      fy[c][k] = rng.uniform(0.5, 3.0) * 2.0 * M_PI / double(height);
      ph[c][k] = rng.uniform(0.0, 2.0 * M_PI);
      amp[c][k] = rng.uniform(0.05, 0.18);
    }
  }
  const int num_shapes = 3 + static_cast<int>(rng.below(4));
  double cx[8], cy[8], cr[8], cc[8][3];
  for (int s = 0; s < num_shapes; ++s) {
    cx[s] = rng.uniform(0.1, 0.9) * double(width);
    cy[s] = rng.uniform(0.1, 0.9) * double(height);
    cr[s] = rng.uniform(0.08, 0.25) * double(std::min(width, height));
    for (int c = 0; c < 3; ++c) cc[s][c] = rng.uniform(0.0, 1.0);
  }

  for (int64_t y = 0; y < height; ++y) {
    for (int64_t x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = base[c];
        for (int k = 0; k < 3; ++k) {
          v += amp[c][k] * std::cos(fx[c][k] * double(x) + ph[c][k]) *
               std::cos(fy[c][k] * double(y) + ph[c][k] * 0.7);
        }
        for (int s = 0; s < num_shapes; ++s) {
          const double d = std::hypot(double(x) - cx[s], double(y) - cy[s]);
          const double t = 1.0 / (1.0 + std::exp((d - cr[s]) / 2.5));
          v = v * (1.0 - 0.6 * t) + cc[s][c] * 0.6 * t;
        }
        v += noise * (rng.uniform() - 0.5);
        v = std::min(std::max(v, 0.0), 1.0);
        img.rgb[static_cast<size_t>((y * width + x) * 3 + c)] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

void write_synth_dataset(const std::string& dir, int count, int64_t width, int64_t height,
                         uint64_t seed0, double noise) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img%03d.png", i);
    save_png((std::filesystem::path(dir) / name).string(),
             synth_image(seed0 + uint64_t(i), width, height, noise));
  }
}

}  // namespace kdlic
