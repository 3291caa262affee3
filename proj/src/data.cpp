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

#include "kdlic/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "kdlic/errors.hpp"
#include "kdlic/sha256.hpp"
#include "kdlic/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace kdlic {

Manifest index_directory(const std::string& root) {
  if (!fs::is_directory(root)) throw IngestionError("not a directory: " + root);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name == kManifestFilename) continue;
    if (!has_image_extension(name)) continue;
    files.push_back(name);
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestionError("no images found under " + root);

  Manifest m;
  m.schema = kManifestSchema;
  for (const auto& name : files) {
    const std::string full = (fs::path(root) / name).string();
    Image8 img;
    try {
      img = load_image(full);
    } catch (const Error& e) {
      throw IngestionError("cannot decode " + full + ": " + e.what());
    }
    ManifestEntry entry;
    entry.file = name;
    entry.sha256 = sha256_file_hex(full);
    entry.width = img.width;
    entry.height = img.height;
    m.entries.push_back(std::move(entry));
  }
  return m;
}

void save_manifest(const std::string& path, const Manifest& m) {
  json j;
  j["schema"] = m.schema;
  j["entries"] = json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back(
        {{"file", e.file}, {"sha256", e.sha256}, {"width", e.width}, {"height", e.height}});
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path);
  f << j.dump(2) << "\n";
}

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IngestionError("cannot open manifest: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError("manifest " + path + ": " + e.what());
  }
  Manifest m;
  m.schema = j.value("schema", 0);
  if (m.schema != kManifestSchema) {
    throw ParseError("manifest " + path + ": schema " + std::to_string(m.schema) +
                     " unsupported (expected " + std::to_string(kManifestSchema) + ")");
  }
  for (const auto& e : j.at("entries")) {
    m.entries.push_back(
        {e.at("file").get<std::string>(), e.at("sha256").get<std::string>(),
         e.at("width").get<int64_t>(), e.at("height").get<int64_t>()});
  }
  return m;
}

PatchDataset::PatchDataset(std::string root, int64_t crop, uint64_t seed, bool verify_checksums)
    : root_(std::move(root)), crop_(crop), seed_(seed) {
  if (crop_ < 1) throw ConfigError("PatchDataset: crop must be positive");
  const std::string manifest_path = (fs::path(root_) / kManifestFilename).string();
  if (!fs::exists(manifest_path)) {
    throw IngestionError("dataset root is not indexed (missing " + manifest_path +
                         "); run the index subcommand first");
  }
  manifest_ = load_manifest(manifest_path);
  if (manifest_.entries.empty()) throw IngestionError("manifest has no entries: " + manifest_path);
  for (const auto& e : manifest_.entries) {
    const std::string full = (fs::path(root_) / e.file).string();
    if (!fs::exists(full)) throw IngestionError("manifest entry missing on disk: " + full);
    if (e.width < crop_ || e.height < crop_) {
      throw IngestionError("image smaller than crop " + std::to_string(crop_) + ": " + full);
    }
    if (verify_checksums && sha256_file_hex(full) != e.sha256) {
      throw IngestionError("checksum mismatch for " + full);
    }
  }
}

const Image8& PatchDataset::cached_image(size_t index) const {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  auto it = cache_.find(index);
  if (it != cache_.end()) return *it->second;
  const auto& entry = manifest_.entries[index];
  const std::string full = (fs::path(root_) / entry.file).string();
  std::shared_ptr<Image8> img;
  try {
    img = std::make_shared<Image8>(load_image(full));
  } catch (const Error& e) {
    throw IngestionError("cannot decode " + full + ": " + e.what());
  }
  auto [pos, inserted] = cache_.emplace(index, std::move(img));
  return *pos->second;
}

Tensor<float> PatchDataset::sample_batch(int64_t step, int64_t batch_size) const {
  if (batch_size < 1) throw PreconditionError("sample_batch: batch_size must be positive");
  Tensor<float> batch({batch_size, 3, crop_, crop_});
  const int64_t hw = crop_ * crop_;
  for (int64_t b = 0; b < batch_size; ++b) {
    Rng rng = Rng::derive(seed_, static_cast<uint64_t>(step), static_cast<uint64_t>(b));
    const auto idx = static_cast<size_t>(rng.below(size()));
    const Image8& img = cached_image(idx);
    const int64_t max_y = img.height - crop_;
    const int64_t max_x = img.width - crop_;
    const int64_t y0 = rng.below(max_y + 1);
    const int64_t x0 = rng.below(max_x + 1);
    float* dst = batch.data() + b * 3 * hw;
    for (int64_t y = 0; y < crop_; ++y) {
      const uint8_t* row = img.rgb.data() + ((y0 + y) * img.width + x0) * 3;
      for (int64_t x = 0; x < crop_; ++x) {
        for (int64_t c = 0; c < 3; ++c) {
          dst[c * hw + y * crop_ + x] = static_cast<float>(row[x * 3 + c]) / 255.0f;
        }
      }
    }
  }
  return batch;
}

std::vector<EvalImage> load_eval_set(const std::string& root) {
  if (!fs::is_directory(root)) throw IngestionError("not a directory: " + root);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name == kManifestFilename) continue;
    if (!has_image_extension(name)) continue;
    if (!has_lossless_extension(name)) {
      throw IngestionError("eval set contains a lossy-format file: " + name +
                           " (evaluation ground truth must be lossless; use PNG or PPM)");
    }
    files.push_back(name);
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestionError("no evaluation images under " + root);

  std::vector<EvalImage> out;
  out.reserve(files.size());
  for (const auto& name : files) {
    const std::string full = (fs::path(root) / name).string();
    EvalImage ei;
    ei.name = name;
    try {
      ei.image = load_image(full);
    } catch (const Error& e) {
      throw IngestionError("cannot decode " + full + ": " + e.what());
    }
    out.push_back(std::move(ei));
  }
  return out;
}

}  // namespace kdlic
