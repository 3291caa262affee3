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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "kdlic/checkpoint.hpp"
#include "kdlic/trainer.hpp"
#include "synth.hpp"

namespace fs = std::filesystem;
using namespace kdlic;
using kdlic::testing::temp_dir;
using kdlic::testing::write_synth_dataset;

namespace {

ModelConfig tiny_config(int64_t n, uint64_t seed) {
  ModelConfig c;
  c.channels_n = n;
  c.latent_m = 6;
  c.hyper_out_channels = n;
  c.init_seed = seed;
  return c;
}

std::string dataset_dir() {
  static std::string dir = [] {
    const std::string d = temp_dir("trainer_ds");
    write_synth_dataset(d, 4, 96, 96, 51);
    save_manifest((fs::path(d) / kManifestFilename).string(), index_directory(d));
    return d;
  }();
  return dir;
}

TrainConfig tiny_train(int64_t steps, const std::string& out_dir = "") {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = 2;
  t.crop = 64;
  t.eval_interval = 2;
  t.log_interval = 1;
  t.lr_initial = 1e-4;
  t.lr_min = 1e-7;
  t.seed = 9;
  t.out_dir = out_dir;
  return t;
}

std::vector<Tensor<float>> tiny_eval_images() {
  return {image_to_tensor(kdlic::testing::synth_image(77, 64, 64)),
          image_to_tensor(kdlic::testing::synth_image(78, 64, 64))};
}

}  // namespace

TEST_CASE("lr schedule: strictly improving losses leave the rate unchanged") {
  TrainConfig c = tiny_train(0);
  c.plateau_patience = 2;
  TrainState s;
  s.lr = 1e-4;
  for (double loss : {1.0, 0.9, 0.8, 0.7}) s = lr_schedule_step(std::move(s), loss, c);
  CHECK(s.lr == 1e-4);
}

TEST_CASE("lr schedule: constant loss for patience+1 evaluations halves once") {
  TrainConfig c = tiny_train(0);
  c.plateau_patience = 3;
  TrainState s;
  s.lr = 1e-4;
  for (int i = 0; i < 4; ++i) s = lr_schedule_step(std::move(s), 1.0, c);
  CHECK(s.lr == doctest::Approx(5e-5));
}

TEST_CASE("lr schedule: the documented six-step sequence halves exactly twice") {
  TrainConfig c = tiny_train(0);
  c.plateau_patience = 2;
  TrainState s;
  s.lr = 1e-4;
  for (double loss : {1.0, 1.0, 1.0, 0.5, 0.5, 0.5}) s = lr_schedule_step(std::move(s), loss, c);
  CHECK(s.lr == doctest::Approx(2.5e-5));
}

TEST_CASE("lr schedule respects the floor") {
  TrainConfig c = tiny_train(0);
  c.plateau_patience = 1;
  c.lr_min = 3e-5;
  TrainState s;
  s.lr = 1e-4;
  for (int i = 0; i < 10; ++i) s = lr_schedule_step(std::move(s), 1.0, c);
  CHECK(s.lr == doctest::Approx(3e-5));
}

TEST_CASE("zero steps leave the model at its initialization") {
  ScaleHyperprior<float> model(tiny_config(4, 123));
  const std::string before = model_checksum(model);
  PatchDataset ds(dataset_dir(), 64, 1);
  auto state = train(model, ds, tiny_eval_images(), tiny_train(0));
  CHECK(state.step == 0);
  CHECK(model_checksum(model) == before);
}

TEST_CASE("training steps change parameters and are seed-reproducible") {
  PatchDataset ds(dataset_dir(), 64, 1);
  auto images = tiny_eval_images();

  ScaleHyperprior<float> m1(tiny_config(4, 123));
  auto s1 = train(m1, ds, images, tiny_train(4));
  CHECK(s1.step == 4);
  CHECK(s1.history.size() == 2);

  ScaleHyperprior<float> m2(tiny_config(4, 123));
  auto s2 = train(m2, ds, images, tiny_train(4));

  // Determinism contract: identical seed/config/dataset gives identical
  // trajectories (bit-exact parameters and eval losses).
  CHECK(model_checksum(m1) == model_checksum(m2));
  REQUIRE(s1.history.size() == s2.history.size());
  for (size_t i = 0; i < s1.history.size(); ++i) {
    CHECK(s1.history[i].eval_loss == s2.history[i].eval_loss);
  }

  ScaleHyperprior<float> m3(tiny_config(4, 123));
  CHECK(model_checksum(m3) != model_checksum(m1));  // training moved the weights
}

TEST_CASE("checkpoint round-trip reproduces eval outputs bit-exactly") {
  const std::string dir = temp_dir("trainer_ckpt");
  ScaleHyperprior<float> model(tiny_config(4, 5));
  PatchDataset ds(dataset_dir(), 64, 1);
  train(model, ds, {}, tiny_train(2, dir));

  const std::string final_path = (fs::path(dir) / "run_final.ckpt").string();
  REQUIRE(fs::exists(final_path));
  auto loaded = model_from_checkpoint(final_path);

  Rng rng(3);
  auto x = Var<float>::constant(random_uniform<float>(rng, {1, 3, 64, 64}, 0.0, 1.0));
  auto a = model.forward(x, ForwardMode::kEval);
  auto b = loaded->forward(x, ForwardMode::kEval);
  for (int64_t i = 0; i < a.x_hat.value().numel(); ++i) {
    CHECK(a.x_hat.value()[i] == b.x_hat.value()[i]);
  }
  for (int64_t i = 0; i < a.y_likelihoods.value().numel(); ++i) {
    CHECK(a.y_likelihoods.value()[i] == b.y_likelihoods.value()[i]);
  }

  auto data = load_checkpoint(final_path);
  CHECK(data.trainer.has_value());
  CHECK(data.trainer->step == 2);
}

TEST_CASE("corrupted schema tag is reported as a versioned error") {
  const std::string dir = temp_dir("trainer_ckpt_bad");
  ScaleHyperprior<float> model(tiny_config(4, 5));
  const std::string path = (fs::path(dir) / "m.ckpt").string();
  save_checkpoint(path, model);
  // Bump the schema field (bytes 4..7).
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    uint32_t v = 999;
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("schema"), ParseError);
}

TEST_CASE("incompatible teacher is rejected before step 0") {
  const std::string dir = temp_dir("trainer_teacher");
  ModelConfig tc = tiny_config(4, 6);
  tc.latent_m = 10;  // student uses 6
  ScaleHyperprior<float> teacher(tc);
  const std::string tpath = (fs::path(dir) / "teacher.ckpt").string();
  save_checkpoint(tpath, teacher);

  ScaleHyperprior<float> student(tiny_config(4, 7));
  PatchDataset ds(dataset_dir(), 64, 1);
  TrainConfig c = tiny_train(2);
  c.kd = KDWeights{};
  c.teacher_checkpoints = {tpath};
  CHECK_THROWS_AS(train(student, ds, {}, c), CompatibilityError);
}

TEST_CASE("distillation training runs and leaves the teacher untouched") {
  const std::string dir = temp_dir("trainer_kd");
  ScaleHyperprior<float> teacher(tiny_config(6, 21));
  const std::string tpath = (fs::path(dir) / "teacher.ckpt").string();
  save_checkpoint(tpath, teacher);
  const std::string teacher_digest = model_checksum(teacher);

  ScaleHyperprior<float> student(tiny_config(4, 22));
  PatchDataset ds(dataset_dir(), 64, 1);
  TrainConfig c = tiny_train(3, dir);
  c.kd = KDWeights{};
  c.teacher_checkpoints = {tpath};
  auto state = train(student, ds, tiny_eval_images(), c);
  CHECK(state.step == 3);

  auto reloaded = model_from_checkpoint(tpath);
  CHECK(model_checksum(*reloaded) == teacher_digest);
}

TEST_CASE("hybrid training needs matching hyper widths and two teachers") {
  const std::string dir = temp_dir("trainer_hybrid");
  ScaleHyperprior<float> ta(tiny_config(6, 31));
  ScaleHyperprior<float> tb(tiny_config(4, 32));  // hyper width 4 == student's
  const std::string pa = (fs::path(dir) / "a.ckpt").string();
  const std::string pb = (fs::path(dir) / "b.ckpt").string();
  save_checkpoint(pa, ta);
  save_checkpoint(pb, tb);

  ScaleHyperprior<float> student(tiny_config(4, 33));
  PatchDataset ds(dataset_dir(), 64, 1);
  TrainConfig c = tiny_train(2);
  KDWeights w;
  w.loss_form = LossForm::kL2;
  w.lambda4 = 0.4;
  c.kd = w;
  c.teacher_checkpoints = {pa, pb};
  auto state = train(student, ds, {}, c);
  CHECK(state.step == 2);

  // Swapped order: teacher B (hyper source) has the wrong width.
  ScaleHyperprior<float> student2(tiny_config(4, 34));
  c.teacher_checkpoints = {pa, pa};
  CHECK_THROWS_AS(train(student2, ds, {}, c), CompatibilityError);
}

TEST_CASE("non-finite loss aborts with a diagnostic checkpoint") {
  const std::string dir = temp_dir("trainer_nan");
  ScaleHyperprior<float> model(tiny_config(4, 41));
  // Poison one weight.
  auto poisoned = model.parameters()[0].var;
  poisoned.mutable_value()[0] = std::numeric_limits<float>::quiet_NaN();
  PatchDataset ds(dataset_dir(), 64, 1);
  CHECK_THROWS_AS(train(model, ds, {}, tiny_train(1, dir)), NumericError);
  CHECK(fs::exists(fs::path(dir) / "run_diagnostic.ckpt"));
}

TEST_CASE("training writes an append-only jsonl log") {
  const std::string dir = temp_dir("trainer_log");
  ScaleHyperprior<float> model(tiny_config(4, 55));
  PatchDataset ds(dataset_dir(), 64, 1);
  train(model, ds, tiny_eval_images(), tiny_train(2, dir));
  std::ifstream f((fs::path(dir) / "run_train_log.jsonl").string());
  REQUIRE(f.good());
  int lines = 0;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines >= 3);  // 2 step logs + 1 eval log
}
