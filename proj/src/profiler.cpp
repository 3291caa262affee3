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

#include "kdlic/profiler.hpp"

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

using nlohmann::json;

namespace kdlic {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

struct PathTrace {
  int64_t h, w;
  int64_t px() const { return h * w; }
};

}  // namespace

double count_gflops(const ModelConfig& config, int64_t height, int64_t width) {
  config.validate();
  if (height < 1 || width < 1) throw PreconditionError("count_gflops: invalid input shape");
  const int64_t hp = ScaleHyperprior<float>::round_up(height, ScaleHyperprior<float>::kStrideMultiple);
  const int64_t wp = ScaleHyperprior<float>::round_up(width, ScaleHyperprior<float>::kStrideMultiple);

  ScaleHyperprior<float> probe(config);  // manifest only; weights unused
  double macs = 0;
  PathTrace cur{0, 0};
  NetPath active = NetPath::kMainEnc;
  auto reset_path = [&](NetPath p) {
    active = p;
    switch (p) {
      case NetPath::kMainEnc:
        cur = {hp, wp};
        break;
      case NetPath::kMainDec:
        cur = {hp / 16, wp / 16};
        break;
      case NetPath::kHyperEnc:
        cur = {hp / 16, wp / 16};
        break;
      case NetPath::kHyperDec:
        cur = {hp / 64, wp / 64};
        break;
    }
  };
  reset_path(NetPath::kMainEnc);
  for (const auto& layer : probe.layer_manifest()) {
    if (layer.path != active) reset_path(layer.path);
    switch (layer.kind) {
      case LayerKind::kConv: {
        PathTrace out{cur.h / layer.stride, cur.w / layer.stride};
        macs += double(out.px()) * double(layer.in_ch) * double(layer.out_ch) *
                double(layer.kernel * layer.kernel);
        cur = out;
        break;
      }
      case LayerKind::kDeconv: {
        macs += double(cur.px()) * double(layer.in_ch) * double(layer.out_ch) *
                double(layer.kernel * layer.kernel);
        cur = {cur.h * layer.stride, cur.w * layer.stride};
        break;
      }
      case LayerKind::kGdn:
        macs += double(cur.px()) * double(layer.in_ch) * double(layer.out_ch);
        break;
    }
  }
  return macs / 1e9;
}

double measure_throughput_fps(const FrameFn& fn, const std::vector<Tensor<float>>& frames,
                              int64_t passes) {
  if (frames.empty()) throw PreconditionError("measure_throughput: empty eval set");
  if (passes < 1) throw PreconditionError("measure_throughput: passes must be >= 1");
  for (const auto& f : frames) fn(f);  // warm-up, untimed
  const double t0 = now_seconds();
  for (int64_t p = 0; p < passes; ++p) {
    for (const auto& f : frames) fn(f);
  }
  const double elapsed = now_seconds() - t0;
  if (elapsed <= 0) throw NumericError("measure_throughput: timer resolution too coarse");
  return double(passes) * double(frames.size()) / elapsed;
}

EnergyMeasurement measure_energy(const FrameFn& fn, const std::vector<Tensor<float>>& frames,
                                 PowerMeter& meter, int64_t passes) {
  if (meter.capability() == MeterCapability::kNull) {
    throw CapabilityError(
        "no power meter available on this host; pass --meter proxy:<watts> for a time-based "
        "estimate or --meter none to omit the energy column");
  }
  if (frames.empty()) throw PreconditionError("measure_energy: empty eval set (zero frames)");
  if (passes < 1) throw PreconditionError("measure_energy: passes must be >= 1");
  for (const auto& f : frames) fn(f);  // warm-up
  const double e0 = meter.energy_joules();
  const double t0 = now_seconds();
  for (int64_t p = 0; p < passes; ++p) {
    for (const auto& f : frames) fn(f);
  }
  const double elapsed = now_seconds() - t0;
  const double joules = meter.energy_joules() - e0;
  const int64_t n_frames = passes * int64_t(frames.size());
  EnergyMeasurement m;
  m.mj_per_frame = joules * 1000.0 / double(n_frames);
  m.estimated = meter.capability() == MeterCapability::kTimeProxy;
  m.avg_power_w = elapsed > 0 ? joules / elapsed : 0;
  m.fps = elapsed > 0 ? double(n_frames) / elapsed : 0;
  return m;
}

// ---------------------------------------------------------------------------
// Meters

bool RaplPowerMeter::available() {
  std::ifstream f("/sys/class/powercap/intel-rapl:0/energy_uj");
  double v;
  return bool(f >> v);
}

RaplPowerMeter::RaplPowerMeter() : path_("/sys/class/powercap/intel-rapl:0/energy_uj") {
  if (!available()) throw CapabilityError("RAPL energy counter not readable on this host");
}

double RaplPowerMeter::energy_joules() {
  std::ifstream f(path_);
  double uj = 0;
  if (!(f >> uj)) throw CapabilityError("RAPL counter read failed: " + path_);
  const double raw = uj / 1e6;
  // Keep the session-level reading monotone across counter wraparound.
  if (last_raw_ >= 0 && raw < last_raw_) wraparound_base_ += last_raw_;
  last_raw_ = raw;
  return wraparound_base_ + raw;
}

TimeProxyPowerMeter::TimeProxyPowerMeter(double watts) : watts_(watts), start_time_(now_seconds()) {
  if (watts <= 0) throw ConfigError("time-proxy meter needs a positive device power in watts");
}

double TimeProxyPowerMeter::energy_joules() { return watts_ * (now_seconds() - start_time_); }

std::string TimeProxyPowerMeter::describe() const {
  std::ostringstream os;
  os << "proxy:" << watts_ << "W";
  return os.str();
}

std::string device_description() {
  std::string cpu = "cpu";
  std::ifstream f("/proc/cpuinfo");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        cpu = line.substr(colon + 1);
        while (!cpu.empty() && cpu.front() == ' ') cpu.erase(cpu.begin());
      }
      break;
    }
  }
  return cpu + " (" + std::to_string(std::thread::hardware_concurrency()) + " threads)";
}

ProfileReport profile_model(const ScaleHyperprior<float>& model, const std::string& model_id,
                            const std::vector<Tensor<float>>& frames, int64_t passes,
                            PowerMeter* meter) {
  if (frames.empty()) throw PreconditionError("profile_model: empty eval set");
  ProfileReport r;
  r.model_id = model_id;
  r.params_m = double(model.count_parameters()) / 1e6;
  r.memory_mb = double(model.memory_bytes()) / double(1 << 20);
  r.gflops_per_frame = count_gflops(model, frames[0].dim(2), frames[0].dim(3));
  r.passes = passes;
  r.device_desc = device_description();

  FrameFn fn = [&model](const Tensor<float>& f) {
    auto x = Var<float>::constant(f);
    (void)model.forward(x, ForwardMode::kEval);
  };
  if (meter && meter->capability() != MeterCapability::kNull) {
    auto e = measure_energy(fn, frames, *meter, passes);
    r.energy_mj_per_frame = e.mj_per_frame;
    r.energy_estimated = e.estimated;
    r.throughput_fps = e.fps;
  } else {
    r.throughput_fps = measure_throughput_fps(fn, frames, passes);
  }
  return r;
}

void save_profile_report(const std::string& path, const ProfileReport& r) {
  json j;
  j["schema"] = 1;
  j["model_id"] = r.model_id;
  j["params_m"] = r.params_m;
  j["memory_mb"] = r.memory_mb;
  j["gflops_per_frame"] = r.gflops_per_frame;
  j["throughput_fps"] = r.throughput_fps;
  if (r.energy_mj_per_frame) {
    j["energy_mj_per_frame"] = *r.energy_mj_per_frame;
    j["energy_estimated"] = r.energy_estimated;
  }
  j["passes"] = r.passes;
  j["device"] = r.device_desc;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write profile report: " + path);
  f << j.dump(2) << "\n";
}

ProfileReport load_profile_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open profile report: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError("profile report " + path + ": " + e.what());
  }
  ProfileReport r;
  r.model_id = j.value("model_id", "");
  r.params_m = j.value("params_m", 0.0);
  r.memory_mb = j.value("memory_mb", 0.0);
  r.gflops_per_frame = j.value("gflops_per_frame", 0.0);
  r.throughput_fps = j.value("throughput_fps", 0.0);
  if (j.contains("energy_mj_per_frame")) {
    r.energy_mj_per_frame = j["energy_mj_per_frame"].get<double>();
    r.energy_estimated = j.value("energy_estimated", false);
  }
  r.passes = j.value("passes", int64_t{1});
  r.device_desc = j.value("device", "");
  return r;
}

}  // namespace kdlic
