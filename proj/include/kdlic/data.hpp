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

#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "kdlic/image.hpp"
#include "kdlic/tensor.hpp"

namespace kdlic {

inline constexpr const char* kManifestFilename = "manifest.json";

struct ManifestEntry {
  std::string file;  // relative to the dataset root
  std::string sha256;
  int64_t width = 0;
  int64_t height = 0;
};

struct Manifest {
  int schema = 1;
  std::vector<ManifestEntry> entries;
};

/// Scan a directory of images, decode-validate each file, and record
/// checksums. Entries are filename-sorted.
Manifest index_directory(const std::string& root);

void save_manifest(const std::string& path, const Manifest& m);
Manifest load_manifest(const std::string& path);

/// Training-patch source: a manifest-indexed folder of images sampled as
/// seeded random crops. Batch content is a pure function of (seed, step).
class PatchDataset {
 public:
  /// Requires `root/manifest.json` to exist (training refuses unindexed
  /// roots). Verifies every entry exists and is at least crop x crop.
  PatchDataset(std::string root, int64_t crop, uint64_t seed, bool verify_checksums = false);

  int64_t size() const { return static_cast<int64_t>(manifest_.entries.size()); }
  int64_t crop() const { return crop_; }
  uint64_t seed() const { return seed_; }

  /// (batch, 3, crop, crop) in [0,1].
  Tensor<float> sample_batch(int64_t step, int64_t batch_size) const;

 private:
  const Image8& cached_image(size_t index) const;

  std::string root_;
  int64_t crop_;
  uint64_t seed_;
  Manifest manifest_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<size_t, std::shared_ptr<Image8>> cache_;
};

struct EvalImage {
  std::string name;  // file name within the eval root
  Image8 image;
};

/// Load a Kodak-style evaluation set: lossless 8-bit RGB images in
/// deterministic filename order. Lossy files are rejected, empty
/// directories are an error.
std::vector<EvalImage> load_eval_set(const std::string& root);

}  // namespace kdlic
