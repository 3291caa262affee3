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

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "kdlic/data.hpp"
#include "kdlic/errors.hpp"
#include "kdlic/sha256.hpp"
#include "synth.hpp"

namespace fs = std::filesystem;
using namespace kdlic;
using kdlic::testing::synth_image;
using kdlic::testing::temp_dir;
using kdlic::testing::write_synth_dataset;

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex(nullptr, 0) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string abc = "abc";
  CHECK(sha256_hex(reinterpret_cast<const uint8_t*>(abc.data()), 3) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("png round-trip preserves pixels") {
  auto img = synth_image(5, 37, 23);
  auto bytes = encode_png(img);
  auto back = decode_image(bytes);
  CHECK(back == img);
}

TEST_CASE("image/tensor conversion is exactly v/255") {
  auto img = synth_image(6, 8, 8);
  auto t = image_to_tensor(img);
  CHECK(t.shape() == std::vector<int64_t>{1, 3, 8, 8});
  for (int64_t p = 0; p < 64; ++p)
    for (int64_t c = 0; c < 3; ++c) {
      CHECK(t[c * 64 + p] == float(img.rgb[size_t(p * 3 + c)]) / 255.0f);
    }
  auto back = tensor_to_image(t);
  CHECK(back == img);
}

TEST_CASE("index + manifest round-trip, dataset sampling determinism") {
  const std::string dir = temp_dir("data");
  write_synth_dataset(dir, 4, 96, 80, 11);

  auto manifest = index_directory(dir);
  CHECK(manifest.entries.size() == 4);
  CHECK(manifest.entries[0].file == "img000.png");
  CHECK(manifest.entries[0].width == 96);
  CHECK(manifest.entries[0].height == 80);
  CHECK(manifest.entries[0].sha256.size() == 64);
  save_manifest((fs::path(dir) / kManifestFilename).string(), manifest);

  PatchDataset ds(dir, 64, /*seed=*/42, /*verify_checksums=*/true);
  auto a = ds.sample_batch(7, 3);
  auto b = ds.sample_batch(7, 3);
  CHECK(a.shape() == std::vector<int64_t>{3, 3, 64, 64});
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

  auto c = ds.sample_batch(8, 3);
  bool differs = false;
  for (int64_t i = 0; i < a.numel(); ++i) differs = differs || a[i] != c[i];
  CHECK(differs);

  for (int64_t i = 0; i < a.numel(); ++i) {
    CHECK(a[i] >= 0.0f);
    CHECK(a[i] <= 1.0f);
  }
}

TEST_CASE("unindexed dataset root is refused") {
  const std::string dir = temp_dir("data_unindexed");
  write_synth_dataset(dir, 2, 96, 96, 3);
  CHECK_THROWS_WITH_AS(PatchDataset(dir, 64, 1), doctest::Contains("index"), IngestionError);
}

TEST_CASE("images smaller than the crop are rejected at construction") {
  const std::string dir = temp_dir("data_small");
  write_synth_dataset(dir, 2, 48, 48, 3);
  save_manifest((fs::path(dir) / kManifestFilename).string(), index_directory(dir));
  CHECK_THROWS_AS(PatchDataset(dir, 64, 1), IngestionError);
}

TEST_CASE("an image exactly crop-sized always yields the full image") {
  const std::string dir = temp_dir("data_exact");
  write_synth_dataset(dir, 1, 64, 64, 9);
  save_manifest((fs::path(dir) / kManifestFilename).string(), index_directory(dir));
  PatchDataset ds(dir, 64, 5);
  auto img = load_image((fs::path(dir) / "img000.png").string());
  auto full = image_to_tensor(img);
  auto batch = ds.sample_batch(0, 2);
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t i = 0; i < full.numel(); ++i) CHECK(batch[b * full.numel() + i] == full[i]);
}

TEST_CASE("crop offsets cover both dimensions approximately uniformly") {
  // One 512x512 image whose pixels encode their own position, crop 64 ->
  // offsets in [0,448]. Recover each sampled offset from the crop's first
  // pixel, bucket into 8 bins, chi-square at the 0.01 level (critical
  // value 18.475 for df=7).
  const std::string dir = temp_dir("data_chi2");
  fs::create_directories(dir);
  Image8 img;
  img.width = 512;
  img.height = 512;
  img.rgb.resize(512 * 512 * 3);
  for (int64_t y = 0; y < 512; ++y)
    for (int64_t x = 0; x < 512; ++x) {
      img.rgb[size_t((y * 512 + x) * 3 + 0)] = uint8_t(x / 2);
      img.rgb[size_t((y * 512 + x) * 3 + 1)] = uint8_t(y / 2);
      img.rgb[size_t((y * 512 + x) * 3 + 2)] = 0;
    }
  save_png((fs::path(dir) / "pos.png").string(), img);
  save_manifest((fs::path(dir) / kManifestFilename).string(), index_directory(dir));
  PatchDataset ds(dir, 64, 1234);

  const int n = 4000;
  int bins_y[8] = {0}, bins_x[8] = {0};
  const int64_t hw = 64 * 64;
  for (int s = 0; s < n; ++s) {
    auto batch = ds.sample_batch(s, 1);
    const int64_t x0 = std::lround(double(batch[0]) * 255.0) * 2;      // R at (0,0)
    const int64_t y0 = std::lround(double(batch[hw]) * 255.0) * 2;     // G at (0,0)
    bins_x[std::min<int64_t>(x0 * 8 / 449, 7)]++;
    bins_y[std::min<int64_t>(y0 * 8 / 449, 7)]++;
  }
  const double expect = n / 8.0;
  double chi_y = 0, chi_x = 0;
  for (int i = 0; i < 8; ++i) {
    chi_y += (bins_y[i] - expect) * (bins_y[i] - expect) / expect;
    chi_x += (bins_x[i] - expect) * (bins_x[i] - expect) / expect;
  }
  CHECK(chi_y < 18.475);
  CHECK(chi_x < 18.475);
}

TEST_CASE("eval set loader: sorted, validated, rejects lossy and empty") {
  const std::string dir = temp_dir("eval");
  write_synth_dataset(dir, 3, 80, 64, 31);
  auto set = load_eval_set(dir);
  CHECK(set.size() == 3);
  CHECK(set[0].name == "img000.png");
  CHECK(set[2].name == "img002.png");
  CHECK(set[0].image.width == 80);

  // A lossy file in the eval root is rejected with an explanation.
  {
    auto img = synth_image(99, 32, 32);
    auto jpeg = encode_jpeg(img, 90);
    std::ofstream f((fs::path(dir) / "bad.jpg").string(), std::ios::binary);
    f.write(reinterpret_cast<const char*>(jpeg.data()), std::streamsize(jpeg.size()));
  }
  CHECK_THROWS_WITH_AS(load_eval_set(dir), doctest::Contains("lossless"), IngestionError);

  const std::string empty = temp_dir("eval_empty");
  CHECK_THROWS_AS(load_eval_set(empty), IngestionError);

  const std::string one = temp_dir("eval_one");
  write_synth_dataset(one, 1, 64, 64, 7);
  CHECK(load_eval_set(one).size() == 1);
}

TEST_CASE("undecodable file named in the ingestion error") {
  const std::string dir = temp_dir("data_bad");
  write_synth_dataset(dir, 1, 96, 96, 3);
  {
    std::ofstream f((fs::path(dir) / "broken.png").string(), std::ios::binary);
    f << "not a png";
  }
  CHECK_THROWS_WITH_AS(index_directory(dir), doctest::Contains("broken.png"), IngestionError);
}
