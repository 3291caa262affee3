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

#include "kdlic/bd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kdlic {

namespace {

struct XY {
  std::vector<double> x, y;
};

// Sorted (x, y) samples for one curve; axis selection per BD flavor.
XY curve_samples(const RDCurve& curve, bool rate_on_y, std::vector<std::string>& warnings) {
  if (curve.points.size() < 2) {
    throw PreconditionError("BD computation needs at least 2 points per curve (" +
                            curve.model_id + " has " + std::to_string(curve.points.size()) + ")");
  }
  std::vector<RDPoint> pts = curve.points;
  std::sort(pts.begin(), pts.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  for (size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].psnr <= pts[i - 1].psnr) {
      warnings.push_back("curve '" + curve.model_id + "' is not PSNR-monotone at bpp " +
                         std::to_string(pts[i].bpp));
    }
    if (pts[i].bpp == pts[i - 1].bpp) {
      throw PreconditionError("curve '" + curve.model_id + "' has duplicate bpp values");
    }
    if (pts[i].bpp <= 0 || pts[i - 1].bpp <= 0) {
      throw PreconditionError("BD computation needs strictly positive bpp");
    }
  }
  XY out;
  for (const auto& p : pts) {
    const double lr = std::log10(p.bpp);
    if (rate_on_y) {
      out.x.push_back(p.psnr);
      out.y.push_back(lr);
    } else {
      out.x.push_back(lr);
      out.y.push_back(p.psnr);
    }
  }
  if (rate_on_y && !std::is_sorted(out.x.begin(), out.x.end())) {
    // PSNR non-monotone in rate; sort by the integration axis.
    std::vector<size_t> idx(out.x.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return out.x[a] < out.x[b]; });
    XY sorted;
    for (size_t i : idx) {
      sorted.x.push_back(out.x[i]);
      sorted.y.push_back(out.y[i]);
    }
    out = std::move(sorted);
  }
  return out;
}

// Least-squares cubic through (x - x0); interpolating for exactly 4 points.
struct Cubic {
  double x0 = 0;
  double c[4] = {0, 0, 0, 0};

  double integral(double lo, double hi) const {
    auto anti = [&](double x) {
      const double u = x - x0;
      return c[0] * u + c[1] * u * u / 2.0 + c[2] * u * u * u / 3.0 + c[3] * u * u * u * u / 4.0;
    };
    return anti(hi) - anti(lo);
  }
};

Cubic fit_cubic(const XY& s) {
  Cubic f;
  for (double x : s.x) f.x0 += x;
  f.x0 /= double(s.x.size());

  // Normal equations for degree-3 least squares on centered x.
  double sx[7] = {0};
  double sy[4] = {0};
  for (size_t i = 0; i < s.x.size(); ++i) {
    const double u = s.x[i] - f.x0;
    double p = 1;
    for (int k = 0; k < 7; ++k) {
      sx[k] += p;
      if (k < 4) sy[k] += s.y[i] * p;
      p *= u;
    }
  }
  double a[4][5];
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) a[r][c] = sx[r + c];
    a[r][4] = sy[r];
  }
  // Gaussian elimination with partial pivoting.
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[piv], a[col]);
    if (a[col][col] == 0) throw NumericError("BD fit: singular system");
    for (int r = col + 1; r < 4; ++r) {
      const double m = a[r][col] / a[col][col];
      for (int c = col; c < 5; ++c) a[r][c] -= m * a[col][c];
    }
  }
  for (int r = 3; r >= 0; --r) {
    double acc = a[r][4];
    for (int c = r + 1; c < 4; ++c) acc -= a[r][c] * f.c[c];
    f.c[r] = acc / a[r][r];
  }
  return f;
}

double integrate_piecewise_linear(const XY& s, double lo, double hi) {
  // Trapezoid over segments clipped to [lo, hi].
  double total = 0;
  for (size_t i = 0; i + 1 < s.x.size(); ++i) {
    const double a = std::max(s.x[i], lo), b = std::min(s.x[i + 1], hi);
    if (b <= a) continue;
    const double dx = s.x[i + 1] - s.x[i];
    auto at = [&](double x) {
      const double t = (x - s.x[i]) / dx;
      return s.y[i] + t * (s.y[i + 1] - s.y[i]);
    };
    total += 0.5 * (at(a) + at(b)) * (b - a);
  }
  return total;
}

// Fritsch-Carlson monotone cubic Hermite integral.
double integrate_pchip(const XY& s, double lo, double hi) {
  const size_t n = s.x.size();
  std::vector<double> h(n - 1), delta(n - 1), m(n);
  for (size_t i = 0; i + 1 < n; ++i) {
    h[i] = s.x[i + 1] - s.x[i];
    delta[i] = (s.y[i + 1] - s.y[i]) / h[i];
  }
  m[0] = delta[0];
  m[n - 1] = delta[n - 2];
  for (size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0) {
      m[i] = 0;
    } else {
      const double w1 = 2 * h[i] + h[i - 1];
      const double w2 = h[i] + 2 * h[i - 1];
      m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  double total = 0;
  for (size_t i = 0; i + 1 < n; ++i) {
    const double a = std::max(s.x[i], lo), b = std::min(s.x[i + 1], hi);
    if (b <= a) continue;
    // Hermite basis integral on normalized t in [ta, tb].
    const double ta = (a - s.x[i]) / h[i], tb = (b - s.x[i]) / h[i];
    auto anti = [&](double t) {
      const double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
      const double H00 = t - t3 + t4 / 2.0;              // int of 2t^3-3t^2+1
      const double H10 = t2 / 2.0 - 2.0 * t3 / 3.0 + t4 / 4.0;  // int of t^3-2t^2+t
      const double H01 = t3 - t4 / 2.0;                  // int of -2t^3+3t^2
      const double H11 = t4 / 4.0 - t3 / 3.0;            // int of t^3-t^2
      return h[i] * (s.y[i] * H00 + h[i] * m[i] * H10 + s.y[i + 1] * H01 + h[i] * m[i + 1] * H11);
    };
    total += anti(tb) - anti(ta);
  }
  return total;
}

double integrate_curve(const XY& s, double lo, double hi, BdFit fit,
                       std::vector<std::string>& warnings) {
  if (fit == BdFit::kPchip) return integrate_pchip(s, lo, hi);
  if (s.x.size() >= 4) return fit_cubic(s).integral(lo, hi);
  warnings.push_back("fewer than 4 points; falling back to piecewise-linear integration");
  return integrate_piecewise_linear(s, lo, hi);
}

BdResult bd_delta(const RDCurve& reference, const RDCurve& test, bool rate_on_y, BdFit fit) {
  BdResult res;
  XY ref = curve_samples(reference, rate_on_y, res.warnings);
  XY tst = curve_samples(test, rate_on_y, res.warnings);
  const double lo = std::max(ref.x.front(), tst.x.front());
  const double hi = std::min(ref.x.back(), tst.x.back());
  if (!(hi > lo)) {
    std::ostringstream os;
    const char* axis = rate_on_y ? "PSNR" : "log10(bpp)";
    os << "no overlapping " << axis << " range: reference [" << ref.x.front() << ", "
       << ref.x.back() << "], test [" << tst.x.front() << ", " << tst.x.back() << "]";
    throw NoOverlapError(os.str());
  }
  res.overlap_lo = lo;
  res.overlap_hi = hi;
  const double int_ref = integrate_curve(ref, lo, hi, fit, res.warnings);
  const double int_tst = integrate_curve(tst, lo, hi, fit, res.warnings);
  const double delta = (int_tst - int_ref) / (hi - lo);
  res.value = rate_on_y ? (std::pow(10.0, delta) - 1.0) * 100.0 : delta;
  return res;
}

}  // namespace

BdResult bd_rate(const RDCurve& reference, const RDCurve& test, BdFit fit) {
  return bd_delta(reference, test, /*rate_on_y=*/true, fit);
}

BdResult bd_psnr(const RDCurve& reference, const RDCurve& test, BdFit fit) {
  return bd_delta(reference, test, /*rate_on_y=*/false, fit);
}

}  // namespace kdlic
