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
#include <vector>

#include "kdlic/model.hpp"
#include "kdlic/trainer.hpp"

namespace kdlic {

/// Everything one training/evaluation run needs, loaded from a JSON config
/// with optional dotted-key command-line overrides.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  std::string train_root;
  std::string eval_root;
  std::string output_dir = "runs";
  std::string tag = "exp";

  /// Referential integrity: data paths exist, tag not already used.
  void validate_paths(bool allow_existing_tag) const;
};

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides = {});

/// Map the 1..8 quality argument onto the MSE-trained lambda ladder.
double quality_to_lambda(int quality);

/// Stable hash of the resolved config (for results-file provenance).
std::string config_digest(const ExperimentConfig& config);

}  // namespace kdlic
