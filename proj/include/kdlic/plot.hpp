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

namespace kdlic {

/// One plotted series: polyline + markers, or markers only.
struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
  bool draw_line = true;
};

/// Render a static line/scatter chart to a PNG. Deterministic output:
/// identical inputs produce byte-identical files.
void render_plot_png(const std::string& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<PlotSeries>& series,
                     int width = 960, int height = 720);

}  // namespace kdlic
