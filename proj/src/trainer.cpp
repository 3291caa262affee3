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

#include "kdlic/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "kdlic/checkpoint.hpp"
#include "kdlic/optim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace kdlic {

TrainState lr_schedule_step(TrainState state, double eval_loss, const TrainConfig& config) {
  const bool improved =
      eval_loss < state.best_eval_loss * (1.0 - config.plateau_rel_improvement) ||
      !std::isfinite(state.best_eval_loss);
  if (improved) {
    state.best_eval_loss = eval_loss;
    state.plateau_count = 0;
    return state;
  }
  if (eval_loss < state.best_eval_loss) state.best_eval_loss = eval_loss;
  if (++state.plateau_count >= config.plateau_patience) {
    state.lr = std::max(state.lr / 2.0, config.lr_min);
    state.plateau_count = 0;
  }
  return state;
}

HistoryPoint evaluate_rd(const ScaleHyperprior<float>& model,
                         const std::vector<Tensor<float>>& eval_images, double rd_lambda) {
  HistoryPoint p;
  if (eval_images.empty()) return p;
  for (const auto& img : eval_images) {
    auto x = Var<float>::constant(img);
    auto out = model.forward(x, ForwardMode::kEval);
    auto rd = rd_loss(out, x, rd_lambda);
    p.eval_loss += rd.rd;
    p.bpp += rd.rate_bits;
    p.psnr += rd.distortion > 0 ? 10.0 * std::log10(1.0 / rd.distortion) : 100.0;
  }
  const double n = static_cast<double>(eval_images.size());
  p.eval_loss /= n;
  p.bpp /= n;
  p.psnr /= n;
  return p;
}

namespace {

struct TeacherSet {
  std::unique_ptr<ScaleHyperprior<float>> a;
  std::unique_ptr<ScaleHyperprior<float>> b;  // hybrid hyper-latent teacher
};

TeacherSet load_teachers(const ScaleHyperprior<float>& student, const TrainConfig& config) {
  TeacherSet t;
  if (!config.kd) return t;
  t.a = model_from_checkpoint(config.teacher_checkpoints[0]);
  if (t.a->config().latent_m != student.config().latent_m) {
    throw CompatibilityError(
        "teacher latent width M=" + std::to_string(t.a->config().latent_m) +
        " does not match student M=" + std::to_string(student.config().latent_m));
  }
  const bool needs_hyper = config.kd->loss_form == LossForm::kL2;
  if (config.teacher_checkpoints.size() == 2) {
    t.b = model_from_checkpoint(config.teacher_checkpoints[1]);
    if (t.b->config().latent_m != student.config().latent_m) {
      throw CompatibilityError("hyper-latent teacher latent width does not match student");
    }
    if (needs_hyper && t.b->config().hyper() != student.config().hyper()) {
      throw CompatibilityError(
          "hyper-latent teacher width " + std::to_string(t.b->config().hyper()) +
          " does not match student hyper width " + std::to_string(student.config().hyper()));
    }
  } else if (needs_hyper && t.a->config().hyper() != student.config().hyper()) {
    throw CompatibilityError("teacher hyper-latent width " + std::to_string(t.a->config().hyper()) +
                             " does not match student hyper width " +
                             std::to_string(student.config().hyper()));
  }
  return t;
}

void append_log(const std::string& path, const json& j) {
  if (path.empty()) return;
  std::ofstream f(path, std::ios::app);
  f << j.dump() << "\n";
}

}  // namespace

TrainState train(ScaleHyperprior<float>& model, const PatchDataset& dataset,
                 const std::vector<Tensor<float>>& eval_images, const TrainConfig& config) {
  config.validate();
  TeacherSet teachers = load_teachers(model, config);

  TrainState state;
  state.lr = config.lr_initial;

  std::vector<Var<float>> params;
  std::vector<Var<float>> main_params;
  for (const auto& p : model.parameters()) {
    params.push_back(p.var);
    if (p.name != "entropy_bottleneck.quantiles") main_params.push_back(p.var);
  }
  Adam<float> opt(main_params, config.lr_initial);
  Adam<float> aux_opt({model.quantiles()}, config.lr_initial);

  const bool write_files = !config.out_dir.empty();
  std::string log_path;
  if (write_files) {
    fs::create_directories(config.out_dir);
    log_path = (fs::path(config.out_dir) / (config.tag + "_train_log.jsonl")).string();
  }
  auto ckpt_path = [&](const std::string& suffix) {
    return (fs::path(config.out_dir) / (config.tag + "_" + suffix + ".ckpt")).string();
  };
  auto write_checkpoint = [&](const std::string& suffix) {
    if (!write_files) return;
    TrainerStateBlob blob{state.step, state.lr, state.best_eval_loss};
    save_checkpoint(ckpt_path(suffix), model, &blob);
  };

  for (int64_t step = 0; step < config.steps; ++step) {
    Tensor<float> batch = dataset.sample_batch(step, config.batch_size);
    auto x = Var<float>::constant(std::move(batch));

    const uint64_t noise_seed = Rng::derive(config.seed, 0x5eed, static_cast<uint64_t>(step)).next_u64();
    auto s_out = model.forward(x, ForwardMode::kTrain, noise_seed);

    double total_value = 0;
    Var<float> total_var;
    LossBreakdown<float> breakdown;
    try {
      if (config.kd) {
        auto ta_out = teachers.a->forward(x, ForwardMode::kEval);
        if (teachers.b) {
          auto tb_out = teachers.b->forward(x, ForwardMode::kEval);
          breakdown = hybrid_kd_loss(s_out, ta_out, tb_out, x, *config.kd);
        } else if (config.kd->loss_form == LossForm::kL2) {
          breakdown = kd_loss_l2(s_out, ta_out, x, *config.kd);
        } else {
          breakdown = kd_loss_l1(s_out, ta_out, x, *config.kd);
        }
        total_value = breakdown.total;
        total_var = breakdown.total_var;
      } else {
        auto rd = rd_loss(s_out, x, config.rd_lambda);
        total_value = rd.rd;
        total_var = rd.rd_var;
        breakdown.rate_term = rd.rate_bits;
        breakdown.distortion_term = rd.distortion;
        breakdown.rd_term = rd.rd;
        breakdown.total = rd.rd;
      }
      if (!std::isfinite(total_value)) {
        throw NumericError("non-finite training loss");
      }
    } catch (const NumericError& e) {
      write_checkpoint("diagnostic");
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(step) +
                         (write_files ? "; diagnostic checkpoint written" : ""));
    }

    opt.zero_grad();
    aux_opt.zero_grad();
    total_var.backward();
    clip_global_grad_norm(main_params, config.grad_clip);
    opt.step();

    auto aux = model.aux_loss();
    aux.backward();
    aux_opt.step();

    state.step = step + 1;

    if (config.log_interval > 0 && (step + 1) % config.log_interval == 0) {
      append_log(log_path, json{{"step", state.step},
                                {"total", breakdown.total},
                                {"latent", breakdown.latent_term},
                                {"hyper_latent", breakdown.hyper_latent_term},
                                {"reconstruction", breakdown.reconstruction_term},
                                {"rate_bpp", breakdown.rate_term},
                                {"distortion", breakdown.distortion_term},
                                {"rd", breakdown.rd_term},
                                {"aux", aux.value()[0]},
                                {"lr", state.lr}});
    }

    if ((step + 1) % config.eval_interval == 0 && !eval_images.empty()) {
      HistoryPoint hp = evaluate_rd(model, eval_images, config.effective_rd_lambda());
      hp.step = state.step;
      state = lr_schedule_step(std::move(state), hp.eval_loss, config);
      opt.set_lr(state.lr);
      aux_opt.set_lr(state.lr);
      state.history.push_back(hp);
      append_log(log_path, json{{"step", state.step},
                                {"eval_loss", hp.eval_loss},
                                {"eval_bpp", hp.bpp},
                                {"eval_psnr", hp.psnr},
                                {"lr", state.lr}});
      write_checkpoint("latest");
    }
  }

  write_checkpoint("final");
  return state;
}

}  // namespace kdlic
