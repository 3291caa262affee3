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
#include <vector>

#include "kdlic/errors.hpp"
#include "kdlic/metrics.hpp"

namespace kdlic {

class NoOverlapError : public Error {
 public:
  using Error::Error;
};

enum class BdFit {
  kCubicPolynomial,  // classical third-order polynomial fit
  kPchip,            // monotone piecewise-cubic variant for sensitivity checks
};

struct BdResult {
  double value = 0;        // percent (bd_rate) or dB (bd_psnr)
  double overlap_lo = 0;   // integration interval, in PSNR (bd_rate)
  double overlap_hi = 0;   // or log10(bpp) (bd_psnr)
  std::vector<std::string> warnings;
};

/// Average bit-rate difference (%) of `test` against `reference` over the
/// overlapping quality range: fit log10(bpp) as a function of PSNR per
/// curve, integrate the difference, return (10^delta - 1) * 100.
BdResult bd_rate(const RDCurve& reference, const RDCurve& test,
                 BdFit fit = BdFit::kCubicPolynomial);

/// Average quality difference (dB) over the overlapping log-rate range:
/// fit PSNR as a function of log10(bpp) per curve and integrate.
BdResult bd_psnr(const RDCurve& reference, const RDCurve& test,
                 BdFit fit = BdFit::kCubicPolynomial);

}  // namespace kdlic
