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

#include <optional>
#include <string>
#include <vector>

#include "kdlic/data.hpp"
#include "kdlic/metrics.hpp"
#include "kdlic/profiler.hpp"

namespace kdlic {

enum class CodecName { kJpeg, kWebp, kJpeg2000 };

const char* codec_name_str(CodecName name);
CodecName codec_name_from(const std::string& s);

/// One operating point of a traditional codec.
struct CodecSpec {
  CodecName name = CodecName::kJpeg;
  int quality = 75;
  bool lossless = false;                  // WebP only
  std::optional<double> rate_target;      // JPEG-2000: compression-ratio layers
  void validate() const;
  std::string label() const;
  bool operator==(const CodecSpec& o) const {
    return name == o.name && quality == o.quality && lossless == o.lossless &&
           rate_target == o.rate_target;
  }
};

struct CodecRoundtrip {
  Image8 decoded;
  int64_t compressed_bytes = 0;
};

/// True when the host can encode/decode this codec right now.
bool codec_available(CodecName name);

/// Encode then decode with the host codec implementation.
CodecRoundtrip codec_roundtrip(const Image8& image, const CodecSpec& spec);

/// One RDPoint per spec averaged over the eval set; bpp uses the real
/// compressed byte count. Duplicate specs are collapsed with a warning.
RDCurve codec_rd_curve(const std::vector<EvalImage>& eval_set, const std::vector<CodecSpec>& specs,
                       std::vector<std::string>* warnings = nullptr);

/// Throughput/energy for a codec operating point over preloaded images,
/// timing encode+decode only.
ProfileReport profile_codec(const CodecSpec& spec, const std::vector<EvalImage>& images,
                            int64_t passes = 50, PowerMeter* meter = nullptr);

}  // namespace kdlic
