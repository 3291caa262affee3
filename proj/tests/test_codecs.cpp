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

#include "kdlic/codecs.hpp"
#include "synth.hpp"

using namespace kdlic;
using kdlic::testing::synth_image;

namespace {

CodecSpec jpeg_q(int q) {
  CodecSpec s;
  s.name = CodecName::kJpeg;
  s.quality = q;
  return s;
}

}  // namespace

TEST_CASE("jpeg roundtrip: shape preserved, deterministic byte count") {
  auto img = synth_image(7, 96, 72, 0.02);
  auto a = codec_roundtrip(img, jpeg_q(60));
  auto b = codec_roundtrip(img, jpeg_q(60));
  CHECK(a.decoded.width == img.width);
  CHECK(a.decoded.height == img.height);
  CHECK(a.compressed_bytes > 0);
  CHECK(a.compressed_bytes == b.compressed_bytes);
  CHECK(a.decoded == b.decoded);
}

TEST_CASE("jpeg quality sweep is monotone in bpp and psnr") {
  auto img = synth_image(8, 128, 96, 0.02);
  double prev_bpp = 0, prev_psnr = 0;
  for (int q : {10, 30, 50, 70, 90}) {
    auto rt = codec_roundtrip(img, jpeg_q(q));
    const double bpp = 8.0 * double(rt.compressed_bytes) / double(img.pixels());
    const double p = psnr(img, rt.decoded);
    CHECK(bpp > prev_bpp);
    CHECK(p >= prev_psnr);
    prev_bpp = bpp;
    prev_psnr = p;
  }
}

TEST_CASE("invalid codec settings are rejected") {
  CHECK_THROWS_AS(codec_roundtrip(synth_image(9, 32, 32), jpeg_q(0)), ConfigError);
  CHECK_THROWS_AS(codec_roundtrip(synth_image(9, 32, 32), jpeg_q(101)), ConfigError);
  CodecSpec bad;
  bad.name = CodecName::kJpeg2000;
  bad.rate_target = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("webp lossless roundtrip is bit-exact (when the host provides webp)") {
  if (!codec_available(CodecName::kWebp)) {
    MESSAGE("webp unavailable on this host; skipping");
    return;
  }
  auto img = synth_image(10, 80, 64, 0.05);
  CodecSpec s;
  s.name = CodecName::kWebp;
  s.quality = 100;
  s.lossless = true;
  auto rt = codec_roundtrip(img, s);
  CHECK(rt.decoded == img);
  CHECK(rt.compressed_bytes > 0);

  // Lossy webp: smaller file, not bit-exact.
  s.lossless = false;
  s.quality = 50;
  auto lossy = codec_roundtrip(img, s);
  CHECK(lossy.compressed_bytes < rt.compressed_bytes);
}

TEST_CASE("jpeg2000 defaults decode near-losslessly (when available)") {
  if (!codec_available(CodecName::kJpeg2000)) {
    MESSAGE("jpeg2000 unavailable on this host; skipping");
    return;
  }
  auto img = synth_image(11, 80, 64, 0.03);
  CodecSpec s;
  s.name = CodecName::kJpeg2000;
  auto rt = codec_roundtrip(img, s);
  CHECK(psnr(img, rt.decoded) > 45.0);

  // Rate-targeted operation compresses harder.
  s.rate_target = 40.0;
  auto rated = codec_roundtrip(img, s);
  CHECK(rated.compressed_bytes < rt.compressed_bytes);
}

TEST_CASE("codec rd curve: averaged points, duplicate specs deduplicated with warning") {
  std::vector<EvalImage> set = {{"a.png", synth_image(12, 96, 96, 0.02)},
                                {"b.png", synth_image(13, 96, 96, 0.02)}};
  std::vector<std::string> warnings;
  auto curve = codec_rd_curve(set, {jpeg_q(30), jpeg_q(30), jpeg_q(70)}, &warnings);
  CHECK(curve.model_id == "jpeg");
  REQUIRE(curve.points.size() == 2);  // deduplicated
  CHECK(!warnings.empty());
  CHECK(curve.points[0].bpp < curve.points[1].bpp);
  CHECK(curve.points[0].label == "jpeg-q30");

  // Single-spec curve is accepted (plotting accepts; BD ops reject later).
  auto single = codec_rd_curve(set, {jpeg_q(50)});
  CHECK(single.points.size() == 1);
}

TEST_CASE("codec profiling yields throughput on preloaded frames") {
  std::vector<EvalImage> set = {{"a.png", synth_image(14, 64, 64, 0.02)}};
  auto r = profile_codec(jpeg_q(50), set, 3);
  CHECK(r.throughput_fps > 0);
  CHECK(r.model_id == "jpeg-q50");
}
