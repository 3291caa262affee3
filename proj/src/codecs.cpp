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

#include "kdlic/codecs.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "kdlic/pil_bridge.hpp"

using nlohmann::json;

namespace kdlic {

const char* codec_name_str(CodecName name) {
  switch (name) {
    case CodecName::kJpeg:
      return "jpeg";
    case CodecName::kWebp:
      return "webp";
    case CodecName::kJpeg2000:
      return "jpeg2000";
  }
  return "?";
}

CodecName codec_name_from(const std::string& s) {
  if (s == "jpeg" || s == "jpg") return CodecName::kJpeg;
  if (s == "webp") return CodecName::kWebp;
  if (s == "jpeg2000" || s == "j2k" || s == "jp2") return CodecName::kJpeg2000;
  throw ConfigError("unknown codec '" + s + "' (expected jpeg, webp, or jpeg2000)");
}

void CodecSpec::validate() const {
  switch (name) {
    case CodecName::kJpeg:
      if (quality < 1 || quality > 100) throw ConfigError("jpeg quality must be in [1,100]");
      if (lossless) throw ConfigError("jpeg has no lossless mode here");
      break;
    case CodecName::kWebp:
      if (quality < 0 || quality > 100) throw ConfigError("webp quality must be in [0,100]");
      break;
    case CodecName::kJpeg2000:
      if (rate_target && *rate_target <= 1.0) {
        throw ConfigError("jpeg2000 rate target is a compression ratio > 1");
      }
      break;
  }
}

std::string CodecSpec::label() const {
  std::ostringstream os;
  os << codec_name_str(name);
  if (name == CodecName::kWebp && lossless) {
    os << "-lossless";
  } else if (name == CodecName::kJpeg2000) {
    if (rate_target) {
      os << "-r" << *rate_target;
    } else {
      os << "-default";
    }
  } else {
    os << "-q" << quality;
  }
  return os.str();
}

bool codec_available(CodecName name) {
  if (name == CodecName::kJpeg) return jpeg_available();
  return PilBridge::instance().available();
}

CodecRoundtrip codec_roundtrip(const Image8& image, const CodecSpec& spec) {
  spec.validate();
  if (image.width < 1 || image.height < 1 || int64_t(image.rgb.size()) != image.pixels() * 3) {
    throw PreconditionError("codec_roundtrip: malformed 8-bit RGB input");
  }
  CodecRoundtrip rt;
  if (spec.name == CodecName::kJpeg) {
    auto bytes = encode_jpeg(image, spec.quality);
    rt.compressed_bytes = int64_t(bytes.size());
    rt.decoded = decode_jpeg(bytes);
  } else {
    auto& bridge = PilBridge::instance();
    if (!bridge.available()) {
      throw CapabilityError(std::string(codec_name_str(spec.name)) +
                            " codec unavailable on this host: " + bridge.unavailable_reason());
    }
    json options = json::object();
    std::string format;
    if (spec.name == CodecName::kWebp) {
      format = "WEBP";
      options["quality"] = spec.quality;
      if (spec.lossless) options["lossless"] = true;
    } else {
      format = "JPEG2000";
      if (spec.rate_target) {
        options["quality_mode"] = "rates";
        options["quality_layers"] = json::array({*spec.rate_target});
        options["irreversible"] = true;
      }
    }
    auto bytes = bridge.encode(image, format, options.dump());
    rt.compressed_bytes = int64_t(bytes.size());
    rt.decoded = bridge.decode(bytes);
  }
  if (rt.decoded.width != image.width || rt.decoded.height != image.height) {
    throw NumericError("codec_roundtrip: decoded shape differs from input");
  }
  return rt;
}

RDCurve codec_rd_curve(const std::vector<EvalImage>& eval_set, const std::vector<CodecSpec>& specs,
                       std::vector<std::string>* warnings) {
  if (eval_set.empty()) throw PreconditionError("codec_rd_curve: empty eval set");
  if (specs.empty()) throw PreconditionError("codec_rd_curve: no codec specs given");

  std::vector<CodecSpec> unique;
  for (const auto& s : specs) {
    if (std::find(unique.begin(), unique.end(), s) != unique.end()) {
      if (warnings) warnings->push_back("duplicate codec spec dropped: " + s.label());
      continue;
    }
    unique.push_back(s);
  }

  RDCurve curve;
  curve.model_id = codec_name_str(unique.front().name);
  for (const auto& spec : unique) {
    RDPoint p;
    p.label = spec.label();
    int64_t msssim_count = 0;
    for (const auto& ei : eval_set) {
      auto rt = codec_roundtrip(ei.image, spec);
      p.bpp += 8.0 * double(rt.compressed_bytes) / double(ei.image.pixels());
      p.psnr += psnr(ei.image, rt.decoded);
      if (ei.image.width >= kMsssimMinSide && ei.image.height >= kMsssimMinSide) {
        p.msssim += msssim(ei.image, rt.decoded);
        ++msssim_count;
      }
    }
    const double n = double(eval_set.size());
    p.bpp /= n;
    p.psnr /= n;
    p.msssim = msssim_count ? p.msssim / double(msssim_count) : 0.0;
    curve.points.push_back(p);
  }
  return curve;
}

ProfileReport profile_codec(const CodecSpec& spec, const std::vector<EvalImage>& images,
                            int64_t passes, PowerMeter* meter) {
  if (images.empty()) throw PreconditionError("profile_codec: empty image set");
  spec.validate();
  if (!codec_available(spec.name)) {
    throw CapabilityError(std::string(codec_name_str(spec.name)) + " codec unavailable on this host");
  }
  ProfileReport r;
  r.model_id = spec.label();
  r.passes = passes;
  r.device_desc = device_description();

  // Frames are pre-decoded; the timed region is encode+decode only.
  std::vector<const Image8*> frames;
  frames.reserve(images.size());
  for (const auto& ei : images) frames.push_back(&ei.image);

  size_t cursor = 0;
  FrameFn fn = [&frames, &cursor, &spec](const Tensor<float>&) {
    (void)codec_roundtrip(*frames[cursor % frames.size()], spec);
    ++cursor;
  };
  // Dummy tensors drive the generic timing loop; the payload images are
  // indexed by the cursor above.
  std::vector<Tensor<float>> dummies(frames.size(), Tensor<float>({1}));

  if (meter && meter->capability() != MeterCapability::kNull) {
    auto e = measure_energy(fn, dummies, *meter, passes);
    r.energy_mj_per_frame = e.mj_per_frame;
    r.energy_estimated = e.estimated;
    r.throughput_fps = e.fps;
  } else {
    r.throughput_fps = measure_throughput_fps(fn, dummies, passes);
  }
  return r;
}

}  // namespace kdlic
