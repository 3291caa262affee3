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
#include <utility>
#include <vector>

#include "kdlic/tensor.hpp"

namespace kdlic {

/// Minimal reader/writer for name-mapped tensor archives in the `.npz`
/// container (ZIP of `.npy` members, stored entries only — the layout
/// numpy's plain savez produces). Deflated archives are rejected with a
/// pointer at the uncompressed variant.
struct NpzEntry {
  std::string name;  // member name without the .npy suffix
  std::vector<int64_t> shape;
  std::vector<double> data;  // converted from f4/f8
};

std::vector<NpzEntry> load_npz(const std::string& path);

void save_npz(const std::string& path,
              const std::vector<std::pair<std::string, Tensor<float>>>& tensors);

}  // namespace kdlic
