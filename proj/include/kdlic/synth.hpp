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

#include "kdlic/image.hpp"

namespace kdlic {

/// Deterministic photographic-ish image: low-frequency color fields, a few
/// soft-edged discs, optional fine texture. Used for demo datasets and
/// self-contained tests.
Image8 synth_image(uint64_t seed, int64_t width, int64_t height, double noise = 0.01);

/// Write `count` synthetic PNGs (img000.png, ...) into dir, creating it.
void write_synth_dataset(const std::string& dir, int count, int64_t width, int64_t height,
                         uint64_t seed0 = 1, double noise = 0.01);

}  // namespace kdlic
