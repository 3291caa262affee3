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

#include <algorithm>
#include <cmath>

#include "kdlic/bd.hpp"

using namespace kdlic;

namespace {

RDCurve curve(std::vector<std::pair<double, double>> pts, std::string id = "c") {
  RDCurve c;
  c.model_id = std::move(id);
  for (auto& [bpp, p] : pts) c.points.push_back({bpp, p, 0.0, ""});
  return c;
}

RDCurve typical() {
  return curve({{0.25, 30.0}, {0.5, 33.1}, {1.0, 36.0}, {2.0, 38.6}});
}

}  // namespace

TEST_CASE("identical curves give exactly zero deltas") {
  auto c = typical();
  CHECK(bd_rate(c, c).value == 0.0);
  CHECK(bd_psnr(c, c).value == 0.0);
}

TEST_CASE("a uniform +1 dB shift gives BD-PSNR of exactly +1") {
  auto ref = typical();
  auto test = ref;
  for (auto& p : test.points) p.psnr += 1.0;
  const auto r = bd_psnr(ref, test);
  CHECK(std::abs(r.value - 1.0) < 1e-9);
}

TEST_CASE("doubling every bpp gives BD-Rate of +100%") {
  auto ref = typical();
  auto test = ref;
  for (auto& p : test.points) p.bpp *= 2.0;
  const auto r = bd_rate(ref, test);
  CHECK(std::abs(r.value - 100.0) < 1e-6);
}

TEST_CASE("halving every bpp gives BD-Rate of -50%") {
  auto ref = typical();
  auto test = ref;
  for (auto& p : test.points) p.bpp *= 0.5;
  CHECK(std::abs(bd_rate(ref, test).value + 50.0) < 1e-6);
}

TEST_CASE("BD-PSNR is antisymmetric") {
  auto a = typical();
  auto b = curve({{0.3, 30.5}, {0.6, 33.0}, {1.1, 35.2}, {1.9, 37.9}});
  const double ab = bd_psnr(a, b).value;
  const double ba = bd_psnr(b, a).value;
  CHECK(std::abs(ab + ba) < 1e-9);
}

TEST_CASE("point order does not matter") {
  auto a = typical();
  auto b = curve({{0.3, 30.5}, {0.6, 33.0}, {1.1, 35.2}, {1.9, 37.9}});
  auto b_shuffled = b;
  std::swap(b_shuffled.points[0], b_shuffled.points[3]);
  std::swap(b_shuffled.points[1], b_shuffled.points[2]);
  CHECK(bd_rate(a, b).value == bd_rate(a, b_shuffled).value);
  CHECK(bd_psnr(a, b).value == bd_psnr(a, b_shuffled).value);
}

TEST_CASE("two and three point curves fall back to piecewise-linear with a warning") {
  auto ref = curve({{0.25, 30.0}, {1.0, 36.0}});
  auto test = curve({{0.25, 31.0}, {1.0, 37.0}});
  const auto r = bd_psnr(ref, test);
  CHECK(std::abs(r.value - 1.0) < 1e-9);
  CHECK(!r.warnings.empty());

  auto ref3 = curve({{0.25, 30.0}, {0.5, 33.0}, {1.0, 36.0}});
  auto test3 = curve({{0.25, 31.0}, {0.5, 34.0}, {1.0, 37.0}});
  CHECK(std::abs(bd_psnr(ref3, test3).value - 1.0) < 1e-9);

  CHECK_THROWS_AS(bd_psnr(curve({{0.5, 33.0}}), test), PreconditionError);
}

TEST_CASE("disjoint ranges raise a no-overlap error naming both ranges") {
  auto lo = curve({{0.1, 20.0}, {0.2, 22.0}, {0.3, 24.0}, {0.4, 25.0}});
  auto hi = curve({{1.0, 35.0}, {1.5, 37.0}, {2.0, 38.5}, {3.0, 40.0}});
  CHECK_THROWS_WITH_AS(bd_rate(lo, hi), doctest::Contains("reference ["), NoOverlapError);
}

TEST_CASE("non-monotone PSNR produces a warning, not an error") {
  auto ref = typical();
  auto bad = curve({{0.25, 30.0}, {0.5, 29.0}, {1.0, 36.0}, {2.0, 38.0}});
  const auto r = bd_psnr(ref, bad);
  bool warned = false;
  for (const auto& w : r.warnings) warned = warned || w.find("monotone") != std::string::npos;
  CHECK(warned);
}

TEST_CASE("pchip variant agrees with the cubic fit on smooth curves") {
  auto a = typical();
  auto b = curve({{0.3, 30.8}, {0.6, 33.4}, {1.2, 36.1}, {2.1, 38.8}});
  const double cubic = bd_psnr(a, b).value;
  const double pchip = bd_psnr(a, b, BdFit::kPchip).value;
  CHECK(std::abs(cubic - pchip) < 0.2);
}

TEST_CASE("overlap interval is reported") {
  auto a = typical();                                              // log10 bpp in [-0.602, 0.301]
  auto b = curve({{0.5, 31.0}, {1.0, 34.0}, {2.0, 37.0}, {4.0, 39.5}});  // [-0.301, 0.602]
  const auto r = bd_psnr(a, b);
  CHECK(r.overlap_lo == doctest::Approx(std::log10(0.5)));
  CHECK(r.overlap_hi == doctest::Approx(std::log10(2.0)));
}
