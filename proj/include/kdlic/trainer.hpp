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
#include "kdlic/losses.hpp"
#include "kdlic/model.hpp"

namespace kdlic {

/// Training schedule: seeded random crops, Adam at lr_initial, halving on
/// validation plateau, periodic checkpointing.
struct TrainConfig {
  int64_t steps = 50000;
  int64_t batch_size = 16;
  int64_t crop = 256;
  double lr_initial = 1e-4;
  double lr_min = 1e-6;
  int64_t plateau_patience = 10;
  double plateau_rel_improvement = 1e-4;
  uint64_t seed = 0;
  int64_t eval_interval = 1000;
  int64_t log_interval = 100;
  double rd_lambda = 0.025;  // plain-RD objective when kd is absent
  double grad_clip = 1.0;
  std::optional<KDWeights> kd;
  std::vector<std::string> teacher_checkpoints;
  std::string out_dir;  // empty -> no checkpoints/logs written
  std::string tag = "run";

  bool hybrid() const { return kd.has_value() && teacher_checkpoints.size() == 2; }
  double effective_rd_lambda() const { return kd ? kd->rd_lambda : rd_lambda; }

  void validate() const {
    if (steps < 0) throw ConfigError("TrainConfig.steps must be >= 0");
    if (batch_size < 1) throw ConfigError("TrainConfig.batch_size must be positive");
    if (crop < 1) throw ConfigError("TrainConfig.crop must be positive");
    if (lr_initial <= 0) throw ConfigError("TrainConfig.lr_initial must be positive");
    if (lr_min >= lr_initial) throw ConfigError("TrainConfig.lr_min must be < lr_initial");
    if (plateau_patience < 1) throw ConfigError("TrainConfig.plateau_patience must be positive");
    if (eval_interval < 1) throw ConfigError("TrainConfig.eval_interval must be positive");
    if (kd) {
      kd->validate();
      if (teacher_checkpoints.empty()) {
        throw ConfigError("TrainConfig: distillation requires at least one teacher checkpoint");
      }
      if (teacher_checkpoints.size() > 2) {
        throw ConfigError("TrainConfig: at most two teacher checkpoints are supported");
      }
      if (teacher_checkpoints.size() == 2 && kd->loss_form != LossForm::kL2) {
        throw ConfigError("TrainConfig: two teachers (hybrid mode) require the L2 loss form");
      }
    } else if (!teacher_checkpoints.empty()) {
      throw ConfigError("TrainConfig: teacher checkpoints given but kd weights absent");
    }
  }
};

struct HistoryPoint {
  int64_t step = 0;
  double eval_loss = 0;
  double bpp = 0;
  double psnr = 0;
};

struct TrainState {
  int64_t step = 0;
  double lr = 0;
  double best_eval_loss = std::numeric_limits<double>::infinity();
  int64_t plateau_count = 0;
  std::vector<HistoryPoint> history;
};

/// Plateau rule: halve the learning rate (down to lr_min) after
/// plateau_patience consecutive evaluations without a relative improvement
/// of at least plateau_rel_improvement over the best seen loss.
TrainState lr_schedule_step(TrainState state, double eval_loss, const TrainConfig& config);

/// Run the training loop, mutating `model` in place. Teachers named in the
/// config are loaded, checked for distillation compatibility before the
/// first step, and kept frozen in eval mode throughout.
TrainState train(ScaleHyperprior<float>& model, const PatchDataset& dataset,
                 const std::vector<Tensor<float>>& eval_images, const TrainConfig& config);

/// Mean eval-mode RD loss (plus mean bpp / PSNR) over full images.
HistoryPoint evaluate_rd(const ScaleHyperprior<float>& model,
                         const std::vector<Tensor<float>>& eval_images, double rd_lambda);

}  // namespace kdlic
