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

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kdlic/model.hpp"

namespace kdlic {

/// Resource measurements for one model (or codec) on one device.
struct ProfileReport {
  std::string model_id;
  double params_m = 0;
  double memory_mb = 0;  // MiB of parameter storage
  double gflops_per_frame = 0;
  double throughput_fps = 0;
  std::optional<double> energy_mj_per_frame;
  bool energy_estimated = false;
  int64_t passes = 1;
  std::string device_desc;
};

enum class MeterCapability { kHardwareTelemetry, kTimeProxy, kNull };

/// Energy source for the profiling session. Readings are cumulative joules
/// and monotone non-decreasing within a session.
class PowerMeter {
 public:
  virtual ~PowerMeter() = default;
  virtual MeterCapability capability() const = 0;
  virtual double energy_joules() = 0;
  virtual std::string describe() const = 0;
};

/// RAPL package-energy counter (Linux powercap sysfs), when readable.
class RaplPowerMeter : public PowerMeter {
 public:
  static bool available();
  RaplPowerMeter();
  MeterCapability capability() const override { return MeterCapability::kHardwareTelemetry; }
  double energy_joules() override;
  std::string describe() const override { return "rapl:" + path_; }

 private:
  std::string path_;
  double wraparound_base_ = 0;
  double last_raw_ = -1;
};

/// Wall-time times a declared device power; reports are marked estimated.
class TimeProxyPowerMeter : public PowerMeter {
 public:
  explicit TimeProxyPowerMeter(double watts);
  MeterCapability capability() const override { return MeterCapability::kTimeProxy; }
  double energy_joules() override;
  std::string describe() const override;

 private:
  double watts_;
  double start_time_;
};

class NullPowerMeter : public PowerMeter {
 public:
  MeterCapability capability() const override { return MeterCapability::kNull; }
  double energy_joules() override { return 0; }
  std::string describe() const override { return "none"; }
};

/// Analytic multiply-accumulate count for one full encode+decode pass at
/// the given input size, in GFLOPs (1 MAC = 1 FLOP, matching the usual
/// FLOP-counter convention); conv, transposed-conv and the GDN channel
/// product are counted, elementwise work is not.
double count_gflops(const ModelConfig& config, int64_t height, int64_t width);

template <typename S>
double count_gflops(const ScaleHyperprior<S>& model, int64_t height, int64_t width) {
  return count_gflops(model.config(), height, width);
}

using FrameFn = std::function<void(const Tensor<float>&)>;

/// Frames/second of `fn` over preloaded frames: one untimed warm-up pass,
/// then `passes` timed passes with no I/O inside the timed region.
double measure_throughput_fps(const FrameFn& fn, const std::vector<Tensor<float>>& frames,
                              int64_t passes = 50);

template <typename S>
double measure_throughput_fps(const ScaleHyperprior<S>& model,
                              const std::vector<Tensor<float>>& frames, int64_t passes = 50) {
  return measure_throughput_fps(
      [&model](const Tensor<float>& f) {
        auto x = Var<S>::constant(f.template cast<S>());
        (void)model.forward(x, ForwardMode::kEval);
      },
      frames, passes);
}

struct EnergyMeasurement {
  double mj_per_frame = 0;
  bool estimated = false;
  double avg_power_w = 0;
  double fps = 0;
};

/// Energy drawn per processed frame over `passes` passes of the set.
EnergyMeasurement measure_energy(const FrameFn& fn, const std::vector<Tensor<float>>& frames,
                                 PowerMeter& meter, int64_t passes = 50);

std::string device_description();

/// Full report: parameters, memory, analytic FLOPs at the frame size,
/// throughput, and (when a meter is given) energy per frame.
ProfileReport profile_model(const ScaleHyperprior<float>& model, const std::string& model_id,
                            const std::vector<Tensor<float>>& frames, int64_t passes = 50,
                            PowerMeter* meter = nullptr);

void save_profile_report(const std::string& path, const ProfileReport& report);
ProfileReport load_profile_report(const std::string& path);

}  // namespace kdlic
