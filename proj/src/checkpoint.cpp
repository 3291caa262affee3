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

#include "kdlic/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "kdlic/sha256.hpp"
#include "kdlic/version.hpp"

using nlohmann::json;

namespace kdlic {

namespace {

constexpr char kMagic[4] = {'K', 'D', 'L', 'C'};

std::string role_name(ModelRole role) {
  return role == ModelRole::kTeacher ? "teacher" : "student";
}

ModelRole role_from(const std::string& s) {
  if (s == "teacher") return ModelRole::kTeacher;
  if (s == "student") return ModelRole::kStudent;
  throw ParseError("checkpoint: unknown role '" + s + "'");
}

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw ParseError("checkpoint: truncated header");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  json header;
  header["schema"] = kCheckpointSchema;
  header["model"] = {{"channels_n", data.config.channels_n},
                     {"latent_m", data.config.latent_m},
                     {"hyper_out_channels", data.config.hyper_out_channels},
                     {"role", role_name(data.config.role)},
                     {"init_seed", data.config.init_seed}};
  if (data.trainer) {
    // JSON has no inf literal; an untouched best_eval_loss round-trips as null.
    json best;
    if (std::isfinite(data.trainer->best_eval_loss)) best = data.trainer->best_eval_loss;
    header["trainer"] = {{"step", data.trainer->step},
                         {"lr", data.trainer->lr},
                         {"best_eval_loss", best}};
  }
  header["dtype"] = "f32";
  json tensors = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : data.tensors) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
  }
  header["tensors"] = std::move(tensors);
  const std::string header_str = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(kMagic, 4);
  write_pod<uint32_t>(f, static_cast<uint32_t>(kCheckpointSchema));
  write_pod<uint64_t>(f, header_str.size());
  f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : data.tensors) {
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!f) throw IoError("checkpoint write failed: " + path);
}

void save_checkpoint(const std::string& path, const ScaleHyperprior<float>& model,
                     const TrainerStateBlob* trainer) {
  CheckpointData data;
  data.config = model.config();
  if (trainer) data.trainer = *trainer;
  data.tensors.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) data.tensors.emplace_back(p.name, p.var.value());
  save_checkpoint(path, data);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("not a checkpoint archive: " + path);
  }
  const auto schema = read_pod<uint32_t>(f);
  if (schema != static_cast<uint32_t>(kCheckpointSchema)) {
    throw ParseError("checkpoint schema " + std::to_string(schema) + " unsupported (expected " +
                     std::to_string(kCheckpointSchema) + "): " + path);
  }
  const auto header_len = read_pod<uint64_t>(f);
  std::string header_str(header_len, '\0');
  f.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!f) throw ParseError("checkpoint: truncated header json");
  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  if (header.value("dtype", "") != "f32") throw ParseError("checkpoint: unsupported dtype");

  CheckpointData data;
  const auto& jm = header.at("model");
  data.config.channels_n = jm.at("channels_n").get<int64_t>();
  data.config.latent_m = jm.at("latent_m").get<int64_t>();
  data.config.hyper_out_channels = jm.at("hyper_out_channels").get<int64_t>();
  data.config.role = role_from(jm.value("role", "student"));
  data.config.init_seed = jm.value("init_seed", uint64_t{0});
  if (header.contains("trainer")) {
    TrainerStateBlob t;
    t.step = header["trainer"].at("step").get<int64_t>();
    t.lr = header["trainer"].at("lr").get<double>();
    const auto& best = header["trainer"].at("best_eval_loss");
    t.best_eval_loss =
        best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
    data.trainer = t;
  }
  for (const auto& jt : header.at("tensors")) {
    const auto name = jt.at("name").get<std::string>();
    const auto shape = jt.at("shape").get<std::vector<int64_t>>();
    Tensor<float> t(shape);
    f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f) throw ParseError("checkpoint: truncated tensor data at " + name);
    data.tensors.emplace_back(name, std::move(t));
  }
  return data;
}

void load_into_model(ScaleHyperprior<float>& model, const CheckpointData& data) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : data.tensors) by_name[name] = &t;
  for (const auto& p : model.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ParseError("checkpoint is missing tensor: " + p.name);
    if (!(it->second->shape() == p.var.value().shape())) {
      throw ShapeError("checkpoint tensor " + p.name + " has shape " + it->second->shape_str() +
                       ", model expects " + p.var.value().shape_str());
    }
    const_cast<Var<float>&>(p.var).mutable_value() = *it->second;
  }
}

std::unique_ptr<ScaleHyperprior<float>> model_from_checkpoint(const std::string& path) {
  CheckpointData data = load_checkpoint(path);
  auto model = std::make_unique<ScaleHyperprior<float>>(data.config);
  load_into_model(*model, data);
  return model;
}

std::string model_checksum(const ScaleHyperprior<float>& model) {
  std::vector<uint8_t> blob;
  for (const auto& p : model.parameters()) {
    blob.insert(blob.end(), p.name.begin(), p.name.end());
    const auto* bytes = reinterpret_cast<const uint8_t*>(p.var.value().data());
    blob.insert(blob.end(), bytes, bytes + p.var.value().numel() * sizeof(float));
  }
  return sha256_hex(blob);
}

}  // namespace kdlic
