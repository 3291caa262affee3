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

#include <cstdint>
#include <string>
#include <vector>

#include "kdlic/tensor.hpp"

namespace kdlic {

/// Interleaved 8-bit RGB image.
struct Image8 {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> rgb;  // height*width*3

  int64_t pixels() const { return width * height; }
  bool operator==(const Image8& o) const {
    return width == o.width && height == o.height && rgb == o.rgb;
  }
};

// File I/O. Format is chosen by extension on save and by magic on load.
Image8 load_image(const std::string& path);
void save_png(const std::string& path, const Image8& img);
void save_ppm(const std::string& path, const Image8& img);

// In-memory codecs (used by the data pipeline and the codec baselines).
Image8 decode_image(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_png(const Image8& img);
std::vector<uint8_t> encode_jpeg(const Image8& img, int quality);
Image8 decode_jpeg(const std::vector<uint8_t>& bytes);
bool jpeg_available();

/// True when the extension names a lossless container we accept as
/// evaluation ground truth.
bool has_lossless_extension(const std::string& path);
bool has_image_extension(const std::string& path);

/// (1,3,H,W) float tensor in [0,1]; conversion is exactly v/255.
Tensor<float> image_to_tensor(const Image8& img);

/// Clamp to [0,1], scale by 255 and round half away from zero.
Image8 tensor_to_image(const Tensor<float>& t);

}  // namespace kdlic
