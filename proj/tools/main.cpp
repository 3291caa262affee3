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

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "kdlic/bd.hpp"
#include "kdlic/checkpoint.hpp"
#include "kdlic/codecs.hpp"
#include "kdlic/config.hpp"
#include "kdlic/data.hpp"
#include "kdlic/metrics.hpp"
#include "kdlic/npz.hpp"
#include "kdlic/plot.hpp"
#include "kdlic/profiler.hpp"
#include "kdlic/synth.hpp"
#include "kdlic/trainer.hpp"
#include "kdlic/version.hpp"

namespace fs = std::filesystem;
using namespace kdlic;

namespace {

std::vector<Tensor<float>> eval_tensors(const std::vector<EvalImage>& set, size_t limit = 0) {
  std::vector<Tensor<float>> out;
  const size_t n = limit ? std::min(limit, set.size()) : set.size();
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(image_to_tensor(set[i].image));
  return out;
}

std::unique_ptr<PowerMeter> make_meter(const std::string& spec) {
  if (spec == "none") return nullptr;
  if (spec == "telemetry") {
    if (!RaplPowerMeter::available()) {
      throw CapabilityError(
          "hardware telemetry (RAPL) is not readable on this host; use --meter proxy:<watts> "
          "or --meter none");
    }
    return std::make_unique<RaplPowerMeter>();
  }
  if (spec.rfind("proxy:", 0) == 0) {
    return std::make_unique<TimeProxyPowerMeter>(std::stod(spec.substr(6)));
  }
  throw ConfigError("unknown --meter '" + spec + "' (expected telemetry, proxy:<watts>, or none)");
}

void print_rd_point(const RDPoint& p) {
  std::printf("bpp      %.4f\n", p.bpp);
  std::printf("psnr     %.2f dB\n", p.psnr);
  std::printf("ms-ssim  %.4f\n", p.msssim);
}

// ---------------------------------------------------------------------------

int cmd_index(const std::string& root) {
  Manifest m = index_directory(root);
  const std::string path = (fs::path(root) / kManifestFilename).string();
  save_manifest(path, m);
  std::printf("indexed %zu images -> %s\n", m.entries.size(), path.c_str());
  return 0;
}

int cmd_synth(const std::string& out, int count, int64_t width, int64_t height, uint64_t seed,
              double noise, bool index_after) {
  write_synth_dataset(out, count, width, height, seed, noise);
  std::printf("wrote %d synthetic images to %s\n", count, out.c_str());
  if (index_after) return cmd_index(out);
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              int rd_quality, bool force) {
  ExperimentConfig cfg = load_experiment_config(config_path, overrides);
  if (rd_quality != 0) {
    const double lam = quality_to_lambda(rd_quality);
    cfg.train.rd_lambda = lam;
    if (cfg.train.kd) cfg.train.kd->rd_lambda = lam;
  }
  if (cfg.train_root.empty()) throw ConfigError("config is missing data.train_root");
  cfg.validate_paths(force);
  cfg.train.validate();

  PatchDataset dataset(cfg.train_root, cfg.train.crop, cfg.train.seed);
  std::vector<Tensor<float>> eval_images;
  std::vector<EvalImage> eval_set;
  if (!cfg.eval_root.empty()) {
    eval_set = load_eval_set(cfg.eval_root);
    eval_images = eval_tensors(eval_set);
  }

  ScaleHyperprior<float> model(cfg.model);
  std::printf("model: N=%lld M=%lld hyper=%lld (%.2f M parameters)\n",
              (long long)cfg.model.channels_n, (long long)cfg.model.latent_m,
              (long long)cfg.model.hyper(), double(model.count_parameters()) / 1e6);
  std::printf("training: %lld steps, batch %lld, crop %lld, lambda %.4g%s\n",
              (long long)cfg.train.steps, (long long)cfg.train.batch_size,
              (long long)cfg.train.crop, cfg.train.effective_rd_lambda(),
              cfg.train.kd ? " (distillation)" : "");

  TrainState state = train(model, dataset, eval_images, cfg.train);
  std::printf("finished at step %lld (lr %.3g)\n", (long long)state.step, state.lr);

  if (!eval_set.empty()) {
    RDPoint p = evaluate_model(model, eval_set, cfg.tag);
    print_rd_point(p);
    RDCurve curve;
    curve.model_id = cfg.tag;
    curve.points = {p};
    const std::string rd_path = (fs::path(cfg.output_dir) / (cfg.tag + "_rd.json")).string();
    save_rd_results(rd_path, curve, {config_digest(cfg), version()});
    std::printf("results -> %s\n", rd_path.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& eval_root, const std::string& out,
             const std::string& label) {
  auto model = model_from_checkpoint(checkpoint);
  auto eval_set = load_eval_set(eval_root);
  const std::string id = label.empty() ? fs::path(checkpoint).stem().string() : label;
  RDPoint p = evaluate_model(*model, eval_set, id);
  print_rd_point(p);
  if (!out.empty()) {
    RDCurve curve;
    curve.model_id = id;
    curve.points = {p};
    save_rd_results(out, curve, {"", version()});
    std::printf("results -> %s\n", out.c_str());
  }
  return 0;
}

int cmd_profile(const std::string& checkpoint, const std::string& eval_root, int64_t passes,
                const std::string& meter_spec, const std::string& input_shape,
                const std::string& out, const std::string& label) {
  auto model = model_from_checkpoint(checkpoint);
  auto eval_set = load_eval_set(eval_root);
  auto frames = eval_tensors(eval_set);

  auto meter = make_meter(meter_spec);
  const std::string id = label.empty() ? fs::path(checkpoint).stem().string() : label;
  ProfileReport r = profile_model(*model, id, frames, passes, meter.get());
  if (!input_shape.empty()) {
    int64_t h = 0, w = 0;
    if (std::sscanf(input_shape.c_str(), "%lldx%lld", (long long*)&h, (long long*)&w) != 2) {
      throw ConfigError("--input-shape must be HxW, e.g. 512x768");
    }
    r.gflops_per_frame = count_gflops(*model, h, w);
  }

  std::printf("model        %s\n", r.model_id.c_str());
  std::printf("params       %.2f M\n", r.params_m);
  std::printf("memory       %.2f MB\n", r.memory_mb);
  std::printf("gflops/frame %.2f\n", r.gflops_per_frame);
  std::printf("throughput   %.2f fps (%lld passes)\n", r.throughput_fps, (long long)r.passes);
  if (r.energy_mj_per_frame) {
    std::printf("energy       %.2f mJ/frame%s\n", *r.energy_mj_per_frame,
                r.energy_estimated ? " (estimated)" : "");
  }
  std::printf("device       %s\n", r.device_desc.c_str());
  if (!out.empty()) {
    save_profile_report(out, r);
    std::printf("report -> %s\n", out.c_str());
  }
  return 0;
}

int cmd_codec_sweep(const std::string& codec, const std::string& eval_root,
                    std::vector<int> qualities, bool lossless, std::vector<double> rate_targets,
                    const std::string& out, const std::string& profile_out, int64_t passes,
                    const std::string& meter_spec) {
  const CodecName name = codec_name_from(codec);
  if (!codec_available(name)) {
    throw CapabilityError(std::string(codec_name_str(name)) + " codec unavailable on this host");
  }
  auto eval_set = load_eval_set(eval_root);

  std::vector<CodecSpec> specs;
  if (name == CodecName::kJpeg2000) {
    if (rate_targets.empty()) {
      specs.push_back({name, 75, false, std::nullopt});
    } else {
      for (double r : rate_targets) specs.push_back({name, 75, false, r});
    }
  } else {
    if (qualities.empty()) qualities = {10, 30, 50, 70, 90};
    for (int q : qualities) specs.push_back({name, q, false, std::nullopt});
    if (lossless && name == CodecName::kWebp) specs.push_back({name, 100, true, std::nullopt});
  }

  std::vector<std::string> warnings;
  RDCurve curve = codec_rd_curve(eval_set, specs, &warnings);
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  for (const auto& p : curve.points) {
    std::printf("%-18s bpp %.4f  psnr %.2f dB\n", p.label.c_str(), p.bpp, p.psnr);
  }
  save_rd_results(out, curve, {"", version()});
  std::printf("results -> %s\n", out.c_str());

  if (!profile_out.empty()) {
    auto meter = make_meter(meter_spec);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& spec : specs) {
      ProfileReport r = profile_codec(spec, eval_set, passes, meter.get());
      std::printf("%-18s %.2f fps", r.model_id.c_str(), r.throughput_fps);
      if (r.energy_mj_per_frame) std::printf("  %.2f mJ/frame", *r.energy_mj_per_frame);
      std::printf("\n");
      nlohmann::json j;
      j["model_id"] = r.model_id;
      j["throughput_fps"] = r.throughput_fps;
      if (r.energy_mj_per_frame) {
        j["energy_mj_per_frame"] = *r.energy_mj_per_frame;
        j["energy_estimated"] = r.energy_estimated;
      }
      j["passes"] = r.passes;
      j["device"] = r.device_desc;
      arr.push_back(j);
    }
    std::ofstream f(profile_out, std::ios::trunc);
    f << arr.dump(2) << "\n";
    std::printf("profiles -> %s\n", profile_out.c_str());
  }
  return 0;
}

int cmd_bd(const std::string& reference, const std::string& test, const std::string& fit_name) {
  RDCurve ref = load_rd_results(reference);
  RDCurve tst = load_rd_results(test);
  const BdFit fit = fit_name == "pchip" ? BdFit::kPchip : BdFit::kCubicPolynomial;
  auto rate = bd_rate(ref, tst, fit);
  auto quality = bd_psnr(ref, tst, fit);
  for (const auto& w : rate.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("BD-Rate  %+.4f %%   (PSNR overlap [%.3f, %.3f] dB)\n", rate.value, rate.overlap_lo,
              rate.overlap_hi);
  std::printf("BD-PSNR  %+.4f dB  (log10-rate overlap [%.4f, %.4f])\n", quality.value,
              quality.overlap_lo, quality.overlap_hi);
  return 0;
}

struct LoadedProfile {
  ProfileReport report;
};

std::vector<ProfileReport> load_profiles_any(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open profile file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("profile file " + path + ": " + e.what());
  }
  std::vector<ProfileReport> out;
  auto one = [](const nlohmann::json& o) {
    ProfileReport r;
    r.model_id = o.value("model_id", "");
    r.params_m = o.value("params_m", 0.0);
    r.memory_mb = o.value("memory_mb", 0.0);
    r.gflops_per_frame = o.value("gflops_per_frame", 0.0);
    r.throughput_fps = o.value("throughput_fps", 0.0);
    if (o.contains("energy_mj_per_frame")) {
      r.energy_mj_per_frame = o["energy_mj_per_frame"].get<double>();
    }
    return r;
  };
  if (j.is_array()) {
    for (const auto& o : j) out.push_back(one(o));
  } else {
    out.push_back(one(j));
  }
  return out;
}

int cmd_plot(const std::vector<std::string>& results_files,
             const std::vector<std::string>& profile_files, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<PlotSeries> rd_series;
  std::map<std::string, RDPoint> best_by_model;  // highest-psnr point per model
  for (const auto& path : results_files) {
    RDCurve c = load_rd_results(path);
    if (c.points.empty()) throw PreconditionError("results file has no points: " + path);
    PlotSeries s;
    s.label = c.model_id.empty() ? fs::path(path).stem().string() : c.model_id;
    for (const auto& p : c.points) s.points.push_back({p.bpp, p.psnr});
    s.draw_line = c.points.size() > 1;
    rd_series.push_back(std::move(s));
    auto& best = best_by_model[c.model_id];
    for (const auto& p : c.points) {
      if (p.psnr >= best.psnr) best = p;
    }
  }
  const std::string rd_path = (fs::path(out_dir) / "rd_curves.png").string();
  render_plot_png(rd_path, "rate-distortion on the eval set", "bpp", "PSNR [dB]", rd_series);
  std::printf("plot -> %s\n", rd_path.c_str());

  if (profile_files.empty()) return 0;
  std::vector<ProfileReport> profiles;
  for (const auto& p : profile_files) {
    auto batch = load_profiles_any(p);
    profiles.insert(profiles.end(), batch.begin(), batch.end());
  }
  struct Axis {
    const char* key;
    const char* label;
    std::function<double(const ProfileReport&)> get;
  };
  const std::vector<Axis> axes = {
      {"params", "parameters [M]", [](const ProfileReport& r) { return r.params_m; }},
      {"gflops", "GFLOPs/frame", [](const ProfileReport& r) { return r.gflops_per_frame; }},
      {"fps", "throughput [fps]", [](const ProfileReport& r) { return r.throughput_fps; }},
      {"energy", "energy [mJ/frame]",
       [](const ProfileReport& r) { return r.energy_mj_per_frame ? *r.energy_mj_per_frame : 0.0; }},
  };
  for (const auto& axis : axes) {
    std::vector<PlotSeries> psnr_series, bpp_series;
    for (const auto& r : profiles) {
      auto it = best_by_model.find(r.model_id);
      if (it == best_by_model.end()) {
        static std::set<std::string> warned;
        if (warned.insert(r.model_id).second) {
          std::fprintf(stderr, "warning: no RD results for profiled model '%s'\n",
                       r.model_id.c_str());
        }
        continue;
      }
      const double x = axis.get(r);
      if (x <= 0) continue;
      PlotSeries sp{r.model_id, {{x, it->second.psnr}}, false};
      PlotSeries sb{r.model_id, {{x, it->second.bpp}}, false};
      psnr_series.push_back(std::move(sp));
      bpp_series.push_back(std::move(sb));
    }
    if (psnr_series.empty()) continue;
    const std::string p1 = (fs::path(out_dir) / ("psnr_vs_" + std::string(axis.key) + ".png")).string();
    const std::string p2 = (fs::path(out_dir) / ("bpp_vs_" + std::string(axis.key) + ".png")).string();
    render_plot_png(p1, std::string("PSNR vs ") + axis.label, axis.label, "PSNR [dB]", psnr_series);
    render_plot_png(p2, std::string("bpp vs ") + axis.label, axis.label, "bpp", bpp_series);
    std::printf("plot -> %s\n", p1.c_str());
    std::printf("plot -> %s\n", p2.c_str());
  }
  return 0;
}

int cmd_import(const std::string& weights, const std::string& out, const std::string& role) {
  auto entries = load_npz(weights);
  std::map<std::string, const NpzEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;

  auto need = [&](const std::string& name) -> const NpzEntry& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError("weight archive is missing tensor: " + name);
    return *it->second;
  };

  // Architecture from tensor shapes.
  ModelConfig config;
  config.channels_n = need("g_a.0.weight").shape.at(0);
  config.latent_m = need("g_a.6.weight").shape.at(0);
  config.hyper_out_channels = need("h_a.4.weight").shape.at(0);
  config.role = role == "student" ? ModelRole::kStudent : ModelRole::kTeacher;

  ScaleHyperprior<float> model(config);
  std::set<std::string> used;
  CheckpointData data;
  data.config = config;
  for (const auto& p : model.parameters()) {
    const NpzEntry& e = need(p.name);
    if (!(e.shape == p.var.value().shape())) {
      Tensor<float> probe(p.var.value().shape());
      throw ShapeError("tensor " + p.name + " has unexpected shape");
    }
    Tensor<float> t(e.shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(e.data[size_t(i)]);
    data.tensors.emplace_back(p.name, std::move(t));
    used.insert(p.name);
  }
  int ignored = 0;
  for (const auto& e : entries) {
    if (!used.count(e.name)) ++ignored;
  }
  if (ignored > 0) {
    std::fprintf(stderr, "note: %d archive tensors ignored (entropy-coder tables and buffers)\n",
                 ignored);
  }
  save_checkpoint(out, data);
  std::printf("imported N=%lld M=%lld hyper=%lld -> %s\n", (long long)config.channels_n,
              (long long)config.latent_m, (long long)config.hyper_out_channels, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kdlic: knowledge-distilled learned image compression toolkit"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  // index
  std::string index_root;
  auto* sc_index = app.add_subcommand("index", "Scan a folder of images into a dataset manifest");
  sc_index->add_option("root", index_root, "image folder")->required();

  // synth
  std::string synth_out;
  int synth_count = 64;
  int64_t synth_w = 256, synth_h = 256;
  uint64_t synth_seed = 1;
  double synth_noise = 0.01;
  bool synth_index = false;
  auto* sc_synth = app.add_subcommand("synth", "Generate a synthetic demo dataset");
  sc_synth->add_option("--out", synth_out, "output folder")->required();
  sc_synth->add_option("--count", synth_count);
  sc_synth->add_option("--width", synth_w);
  sc_synth->add_option("--height", synth_h);
  sc_synth->add_option("--seed", synth_seed);
  sc_synth->add_option("--noise", synth_noise);
  sc_synth->add_flag("--index", synth_index, "write the manifest too");

  // train
  std::string train_config;
  std::vector<std::string> train_overrides;
  int train_quality = 0;
  bool train_force = false;
  auto* sc_train = app.add_subcommand("train", "Train a model (plain RD or distillation)");
  sc_train->add_option("--config", train_config, "experiment config json")->required();
  sc_train->add_option("--set", train_overrides, "override config keys, e.g. train.steps=2000");
  sc_train->add_option("--rd-quality", train_quality, "quality 1..8 selecting the RD lambda")
      ->check(CLI::Range(1, 8));
  sc_train->add_flag("--force", train_force, "allow reusing an existing tag");

  // eval
  std::string eval_ckpt, eval_root, eval_out, eval_label;
  auto* sc_eval = app.add_subcommand("eval", "Evaluate a checkpoint on an eval set");
  sc_eval->add_option("--checkpoint", eval_ckpt)->required();
  sc_eval->add_option("--data", eval_root, "eval image folder")->required();
  sc_eval->add_option("--out", eval_out, "rd results json");
  sc_eval->add_option("--label", eval_label);

  // profile
  std::string prof_ckpt, prof_root, prof_meter = "none", prof_shape, prof_out, prof_label;
  int64_t prof_passes = 50;
  auto* sc_profile = app.add_subcommand("profile", "Measure FLOPs, throughput and energy");
  sc_profile->add_option("--checkpoint", prof_ckpt)->required();
  sc_profile->add_option("--data", prof_root, "eval image folder")->required();
  sc_profile->add_option("--passes", prof_passes);
  sc_profile->add_option("--meter", prof_meter, "telemetry | proxy:<watts> | none");
  sc_profile->add_option("--input-shape", prof_shape, "report FLOPs at HxW instead");
  sc_profile->add_option("--out", prof_out, "profile report json");
  sc_profile->add_option("--label", prof_label, "model id used in the report");

  // codec-sweep
  std::string cs_codec, cs_root, cs_out, cs_profile_out, cs_meter = "none";
  std::vector<int> cs_qualities;
  std::vector<double> cs_rates;
  bool cs_lossless = false;
  int64_t cs_passes = 10;
  auto* sc_codec = app.add_subcommand("codec-sweep", "RD sweep of a traditional codec");
  sc_codec->add_option("--codec", cs_codec, "jpeg | webp | jpeg2000")->required();
  sc_codec->add_option("--data", cs_root, "eval image folder")->required();
  sc_codec->add_option("--qualities", cs_qualities, "quality list (jpeg/webp)");
  sc_codec->add_option("--rate-targets", cs_rates, "compression ratios (jpeg2000)");
  sc_codec->add_flag("--lossless", cs_lossless, "add the webp lossless point");
  sc_codec->add_option("--out", cs_out, "rd results json")->required();
  sc_codec->add_option("--profile-out", cs_profile_out, "also time the codec, write reports");
  sc_codec->add_option("--passes", cs_passes);
  sc_codec->add_option("--meter", cs_meter, "telemetry | proxy:<watts> | none");

  // bd
  std::string bd_ref, bd_test, bd_fit = "cubic";
  auto* sc_bd = app.add_subcommand("bd", "Bjontegaard deltas between two RD results files");
  sc_bd->add_option("--reference", bd_ref)->required();
  sc_bd->add_option("--test", bd_test)->required();
  sc_bd->add_option("--fit", bd_fit, "cubic | pchip");

  // plot
  std::vector<std::string> plot_results, plot_profiles;
  std::string plot_out = "plots";
  auto* sc_plot = app.add_subcommand("plot", "Render RD curves and resource scatter plots");
  sc_plot->add_option("results", plot_results, "rd results json files")->required();
  sc_plot->add_option("--profiles", plot_profiles, "profile report json files");
  sc_plot->add_option("--out", plot_out, "output folder");

  // import
  std::string import_weights, import_out, import_role = "teacher";
  auto* sc_import = app.add_subcommand("import", "Convert a name-mapped tensor archive (.npz)");
  sc_import->add_option("--weights", import_weights, "npz archive of named tensors")->required();
  sc_import->add_option("--out", import_out, "checkpoint path")->required();
  sc_import->add_option("--role", import_role, "teacher | student");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sc_index) return cmd_index(index_root);
    if (*sc_synth) return cmd_synth(synth_out, synth_count, synth_w, synth_h, synth_seed,
                                    synth_noise, synth_index);
    if (*sc_train) return cmd_train(train_config, train_overrides, train_quality, train_force);
    if (*sc_eval) return cmd_eval(eval_ckpt, eval_root, eval_out, eval_label);
    if (*sc_profile) {
      return cmd_profile(prof_ckpt, prof_root, prof_passes, prof_meter, prof_shape, prof_out,
                         prof_label);
    }
    if (*sc_codec) {
      return cmd_codec_sweep(cs_codec, cs_root, cs_qualities, cs_lossless, cs_rates, cs_out,
                             cs_profile_out, cs_passes, cs_meter);
    }
    if (*sc_bd) return cmd_bd(bd_ref, bd_test, bd_fit);
    if (*sc_plot) return cmd_plot(plot_results, plot_profiles, plot_out);
    if (*sc_import) return cmd_import(import_weights, import_out, import_role);
  } catch (const CapabilityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
  return 0;
}
