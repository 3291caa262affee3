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

#include "kdlic/config.hpp"

#include <array>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "kdlic/sha256.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace kdlic {

namespace {

constexpr std::array<double, 8> kQualityLambda = {0.0018, 0.0035, 0.0067, 0.0130,
                                                  0.0250, 0.0483, 0.0932, 0.1800};

ModelRole role_from(const std::string& s) {
  if (s == "teacher") return ModelRole::kTeacher;
  if (s == "student") return ModelRole::kStudent;
  throw ConfigError("model.role must be 'teacher' or 'student', got '" + s + "'");
}

LossForm loss_form_from(const std::string& s) {
  if (s == "L1" || s == "l1") return LossForm::kL1;
  if (s == "L2" || s == "l2") return LossForm::kL2;
  throw ConfigError("kd.loss_form must be 'L1' or 'L2', got '" + s + "'");
}

LatentDivergence divergence_from(const std::string& s) {
  if (s == "mse") return LatentDivergence::kMse;
  if (s == "kl") return LatentDivergence::kKl;
  throw ConfigError("kd.latent_divergence must be 'mse' or 'kl', got '" + s + "'");
}

// Apply "a.b.c=value" onto the raw json; values parse as JSON when they
// can, otherwise as strings.
void apply_override(json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + spec + "' is not of the form key.path=value");
  }
  const std::string keypath = spec.substr(0, eq);
  const std::string value_str = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(value_str);
  } catch (const json::exception&) {
    value = value_str;
  }
  json* cur = &j;
  size_t start = 0;
  while (true) {
    const auto dot = keypath.find('.', start);
    const std::string key = keypath.substr(start, dot - start);
    if (key.empty()) throw ConfigError("override '" + spec + "' has an empty key segment");
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      break;
    }
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

double quality_to_lambda(int quality) {
  if (quality < 1 || quality > 8) {
    throw ConfigError("quality must be in [1,8], got " + std::to_string(quality));
  }
  return kQualityLambda[size_t(quality - 1)];
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  json j;
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw ParseError("config " + path + ": " + e.what());
    }
  } else {
    j = json::object();
  }
  for (const auto& o : overrides) apply_override(j, o);

  ExperimentConfig c;
  if (j.contains("model")) {
    const auto& m = j["model"];
    maybe(m, "channels_n", c.model.channels_n);
    maybe(m, "latent_m", c.model.latent_m);
    maybe(m, "hyper_out_channels", c.model.hyper_out_channels);
    maybe(m, "init_seed", c.model.init_seed);
    if (m.contains("role")) c.model.role = role_from(m["role"].get<std::string>());
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    maybe(t, "steps", c.train.steps);
    maybe(t, "batch_size", c.train.batch_size);
    maybe(t, "crop", c.train.crop);
    maybe(t, "lr_initial", c.train.lr_initial);
    maybe(t, "lr_min", c.train.lr_min);
    maybe(t, "plateau_patience", c.train.plateau_patience);
    maybe(t, "plateau_rel_improvement", c.train.plateau_rel_improvement);
    maybe(t, "seed", c.train.seed);
    maybe(t, "eval_interval", c.train.eval_interval);
    maybe(t, "log_interval", c.train.log_interval);
    maybe(t, "rd_lambda", c.train.rd_lambda);
    maybe(t, "grad_clip", c.train.grad_clip);
    if (t.contains("rd_quality") && !t["rd_quality"].is_null()) {
      c.train.rd_lambda = quality_to_lambda(t["rd_quality"].get<int>());
    }
  }
  if (j.contains("kd") && !j["kd"].is_null()) {
    KDWeights w;
    const auto& k = j["kd"];
    maybe(k, "lambda1", w.lambda1);
    maybe(k, "lambda2", w.lambda2);
    maybe(k, "lambda3", w.lambda3);
    if (k.contains("lambda4") && !k["lambda4"].is_null()) w.lambda4 = k["lambda4"].get<double>();
    maybe(k, "rd_lambda", w.rd_lambda);
    if (k.contains("rd_quality") && !k["rd_quality"].is_null()) {
      w.rd_lambda = quality_to_lambda(k["rd_quality"].get<int>());
    }
    if (k.contains("loss_form")) w.loss_form = loss_form_from(k["loss_form"].get<std::string>());
    if (k.contains("latent_divergence")) {
      w.latent_divergence = divergence_from(k["latent_divergence"].get<std::string>());
    }
    c.train.kd = w;
    if (k.contains("teachers")) {
      c.train.teacher_checkpoints = k["teachers"].get<std::vector<std::string>>();
    }
  }
  if (j.contains("data")) {
    maybe(j["data"], "train_root", c.train_root);
    maybe(j["data"], "eval_root", c.eval_root);
  }
  maybe(j, "output_dir", c.output_dir);
  maybe(j, "tag", c.tag);

  c.model.validate();
  c.train.out_dir = c.output_dir;
  c.train.tag = c.tag;
  return c;
}

void ExperimentConfig::validate_paths(bool allow_existing_tag) const {
  if (!train_root.empty() && !fs::exists(train_root)) {
    throw ConfigError("data.train_root does not exist: " + train_root);
  }
  if (!eval_root.empty() && !fs::exists(eval_root)) {
    throw ConfigError("data.eval_root does not exist: " + eval_root);
  }
  for (const auto& t : train.teacher_checkpoints) {
    if (!fs::exists(t)) throw ConfigError("teacher checkpoint does not exist: " + t);
  }
  if (!allow_existing_tag && fs::exists(output_dir)) {
    const std::string sentinel = (fs::path(output_dir) / (tag + "_final.ckpt")).string();
    if (fs::exists(sentinel)) {
      throw ConfigError("tag '" + tag + "' already used in " + output_dir +
                        " (found " + sentinel + "); choose a new tag or pass --force");
    }
  }
}

std::string config_digest(const ExperimentConfig& c) {
  json j;
  j["model"] = {{"channels_n", c.model.channels_n},
                {"latent_m", c.model.latent_m},
                {"hyper_out_channels", c.model.hyper_out_channels},
                {"init_seed", c.model.init_seed}};
  j["train"] = {{"steps", c.train.steps},     {"batch_size", c.train.batch_size},
                {"crop", c.train.crop},       {"lr_initial", c.train.lr_initial},
                {"seed", c.train.seed},       {"rd_lambda", c.train.rd_lambda},
                {"eval_interval", c.train.eval_interval}};
  if (c.train.kd) {
    j["kd"] = {{"lambda1", c.train.kd->lambda1},
               {"lambda2", c.train.kd->lambda2},
               {"lambda3", c.train.kd->lambda3},
               {"rd_lambda", c.train.kd->rd_lambda},
               {"loss_form", c.train.kd->loss_form == LossForm::kL2 ? "L2" : "L1"}};
    if (c.train.kd->lambda4) j["kd"]["lambda4"] = *c.train.kd->lambda4;
    j["kd"]["teachers"] = c.train.teacher_checkpoints;
  }
  j["data"] = {{"train_root", c.train_root}, {"eval_root", c.eval_root}};
  const std::string s = j.dump();
  return sha256_hex(reinterpret_cast<const uint8_t*>(s.data()), s.size()).substr(0, 16);
}

}  // namespace kdlic
