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

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kdlic/model.hpp"

namespace kdlic {

/// Trainer progress persisted alongside the weights.
struct TrainerStateBlob {
  int64_t step = 0;
  double lr = 0;
  double best_eval_loss = 0;
};

/// In-memory form of the single-file checkpoint archive: config as
/// structured text, named float32 tensors, optional trainer state. The
/// on-disk format carries an integer schema tag.
struct CheckpointData {
  ModelConfig config;
  std::optional<TrainerStateBlob> trainer;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

void save_checkpoint(const std::string& path, const ScaleHyperprior<float>& model,
                     const TrainerStateBlob* trainer = nullptr);
void save_checkpoint(const std::string& path, const CheckpointData& data);

CheckpointData load_checkpoint(const std::string& path);

/// Copy tensors by name into a built model; every model parameter must be
/// present with a matching shape.
void load_into_model(ScaleHyperprior<float>& model, const CheckpointData& data);

/// Build the model described by the checkpoint and load its weights.
std::unique_ptr<ScaleHyperprior<float>> model_from_checkpoint(const std::string& path);

/// Order-independent digest of all parameter tensors (name + bytes).
std::string model_checksum(const ScaleHyperprior<float>& model);

}  // namespace kdlic
