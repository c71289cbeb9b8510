#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "golden/goldens.hpp"
#include "rnan/data.hpp"
#include "rnan/image.hpp"
#include "rnan/resize.hpp"
#include "rnan/trainer.hpp"

using namespace rnan;
namespace fs = std::filesystem;

namespace {

const std::string kDataDir = RNAN_TEST_DATA_DIR;

// tiny dataset in a temp tree built from the bundled training images
DatasetSpec tiny_dataset(uint64_t seed) {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "rnan_trainer_data";
    fs::create_directories(d / "HR");
    fs::create_directories(d / "LR_x2");
    for (const auto& name : {"train0.png", "train1.png"}) {
      const ImageU8 hr = modcrop(load_png(kDataDir + "/train/" + name), 2);
      save_png(hr, (d / "HR" / name).string());
      const ImageF lr =
          bicubic_resize(to_float(hr), hr.width / 2, hr.height / 2);
      save_png(to_u8(lr), (d / "LR_x2" / name).string());
    }
    return d;
  }();
  return scan_dataset_root(dir.string(), 2, seed);
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.g = 1;
  cfg.b = 1;
  cfg.c = 8;
  cfg.scale = 2;
  cfg.n = 1;
  cfg.m = 1;
  cfg.r = 4;
  return cfg;
}

TrainConfig tiny_train(int steps) {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.patch = 12;
  cfg.lr0 = 1e-3;
  cfg.total_epochs = 1;
  cfg.steps_per_epoch = steps;
  cfg.seed = 5;
  cfg.log_every = 2;
  return cfg;
}

std::vector<float> weight_blob(const RnanWeights<float>& w) {
  std::vector<float> out;
  for (const auto& p : w.parameters())
    out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

}  // namespace

TEST_CASE("learning-rate schedule follows the halving closed form") {
  TrainConfig cfg;
  cfg.lr0 = 1e-4;
  cfg.halve_every_epochs = 200;
  CHECK(lr_at_epoch(0, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at_epoch(199, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at_epoch(200, cfg) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(lr_at_epoch(400, cfg) == doctest::Approx(2.5e-5).epsilon(1e-12));
  for (int e = 0; e <= 1000; ++e) {
    const double want = 1e-4 * std::pow(0.5, e / 200);
    CHECK(lr_at_epoch(e, cfg) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg = tiny_train(4);
  CHECK_NOTHROW(cfg.validate());
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_train(4);
  cfg.precision = "bf16";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("adam first step moves by lr times the gradient sign") {
  using Named = RnanWeights<double>::Named;
  TrainConfig cfg;
  cfg.eps_adam = 1e-12;
  Tensor<double> p = Tensor<double>::from({2}, {1.0, -2.0});
  p.set_requires_grad(true);
  p.grad()[0] = 0.37;    // any nonzero gradient
  p.grad()[1] = -5.1;
  std::vector<Named> params{{"p", p}};
  AdamState<double> st;
  st.m.assign(1, std::vector<double>(2, 0.0));
  st.v.assign(1, std::vector<double>(2, 0.0));
  adam_step<double>(params, st, cfg, 0.25);
  CHECK(p.data()[0] == doctest::Approx(1.0 - 0.25).epsilon(1e-9));
  CHECK(p.data()[1] == doctest::Approx(-2.0 + 0.25).epsilon(1e-9));
  CHECK(st.t == 1);
}

TEST_CASE("adam leaves zero-gradient parameters untouched") {
  using Named = RnanWeights<double>::Named;
  TrainConfig cfg;
  Tensor<double> p = Tensor<double>::from({3}, {0.5, -1.0, 2.0});
  p.set_requires_grad(true);
  p.zero_grad();
  std::vector<Named> params{{"p", p}};
  AdamState<double> st;
  st.m.assign(1, std::vector<double>(3, 0.0));
  st.v.assign(1, std::vector<double>(3, 0.0));
  for (int i = 0; i < 3; ++i) adam_step<double>(params, st, cfg, 0.1);
  CHECK(p.data()[0] == 0.5);
  CHECK(p.data()[1] == -1.0);
  CHECK(p.data()[2] == 2.0);
  for (double m : st.m[0]) CHECK(m == 0.0);
  for (double v : st.v[0]) CHECK(v == 0.0);
}

TEST_CASE("adam reproduces the hand-computed quadratic trace") {
  // f(x) = x^2/2, gradient x, from x0 = 1 at lr 0.1
  using Named = RnanWeights<double>::Named;
  TrainConfig cfg;  // beta/eps defaults match the trace
  Tensor<double> x = Tensor<double>::scalar(1.0);
  x.set_requires_grad(true);
  std::vector<Named> params{{"x", x}};
  AdamState<double> st;
  st.m.assign(1, std::vector<double>(1, 0.0));
  st.v.assign(1, std::vector<double>(1, 0.0));
  for (int t = 0; t < 3; ++t) {
    x.zero_grad();
    x.grad()[0] = x.data()[0];
    adam_step<double>(params, st, cfg, 0.1);
    CHECK(x.data()[0] == doctest::Approx(golden::kAdamTrace[t]).epsilon(1e-10));
  }
}

TEST_CASE("train_step runs, clears gradients and aborts on non-finite loss") {
  const DatasetSpec ds = tiny_dataset(3);
  BatchStream<float> stream(ds, 12, 2);
  Trainer<float> trainer(init_params<float>(tiny_model(), 1), tiny_train(4));
  const auto batch = stream.at_step(0);
  const double loss = trainer.train_step(batch, 1e-3);
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0);
  CHECK(trainer.step() == 1);
  for (const auto& p : trainer.weights().parameters())
    if (p.tensor.grad_allocated())
      for (float g : p.tensor.grad()) CHECK(g == 0.0f);

  trainer.weights().head_w.data()[0] = std::nanf("");
  CHECK_THROWS_WITH_AS(trainer.train_step(batch, 1e-3),
                       doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("checkpoint round trip is exact") {
  Trainer<float> a(init_params<float>(tiny_model(), 2), tiny_train(4));
  const DatasetSpec ds = tiny_dataset(4);
  BatchStream<float> stream(ds, 12, 2);
  a.train_step(stream.at_step(0), 1e-3);
  a.train_step(stream.at_step(1), 1e-3);

  const std::string path =
      (fs::temp_directory_path() / "rnan_ckpt_test.rnanck").string();
  a.save_checkpoint(path);
  Trainer<float> b = Trainer<float>::load_checkpoint(path);
  CHECK(b.step() == a.step());
  CHECK(b.optimizer_state().t == a.optimizer_state().t);
  CHECK(weight_blob(b.weights()) == weight_blob(a.weights()));
  for (size_t i = 0; i < a.optimizer_state().m.size(); ++i) {
    CHECK(a.optimizer_state().m[i] == b.optimizer_state().m[i]);
    CHECK(a.optimizer_state().v[i] == b.optimizer_state().v[i]);
  }
  ModelConfig other = tiny_model();
  other.c = 16;
  CHECK_THROWS_AS(Trainer<float>::load_checkpoint(path, other),
                  std::runtime_error);
  fs::remove(path);
}

TEST_CASE("resume reproduces the uninterrupted run bitwise") {
  const DatasetSpec ds = tiny_dataset(6);
  BatchStream<float> stream(ds, 12, 2);

  const fs::path out_a = fs::temp_directory_path() / "rnan_resume_a";
  const fs::path out_b = fs::temp_directory_path() / "rnan_resume_b";
  fs::remove_all(out_a);
  fs::remove_all(out_b);

  // uninterrupted: 2 epochs x 3 steps
  TrainConfig cfg = tiny_train(3);
  cfg.total_epochs = 2;
  Trainer<float> full(init_params<float>(tiny_model(), 7), cfg);
  train_loop(full, stream, out_a.string());

  // interrupted at the first epoch boundary, then resumed
  TrainConfig half = cfg;
  half.total_epochs = 1;
  Trainer<float> first(init_params<float>(tiny_model(), 7), half);
  train_loop(first, stream, out_b.string());
  Trainer<float> resumed =
      Trainer<float>::load_checkpoint((out_b / "checkpoint.rnanck").string());
  REQUIRE(resumed.step() == 3);
  while (resumed.step() < 6) {
    const int epoch = static_cast<int>(resumed.step() / 3);
    const double lr = lr_at_epoch(epoch, cfg);
    resumed.train_step(stream.at_step(resumed.step()), lr);
  }
  CHECK(weight_blob(resumed.weights()) == weight_blob(full.weights()));
  fs::remove_all(out_a);
  fs::remove_all(out_b);
}

TEST_CASE("train_loop writes metrics, checkpoints and final weights") {
  const DatasetSpec ds = tiny_dataset(8);
  BatchStream<float> stream(ds, 12, 2);
  const fs::path out = fs::temp_directory_path() / "rnan_loop_out";
  fs::remove_all(out);
  TrainConfig cfg = tiny_train(4);
  Trainer<float> trainer(init_params<float>(tiny_model(), 8), cfg);
  const TrainResult res = train_loop(trainer, stream, out.string());
  CHECK(res.steps_run == 4);
  CHECK(res.losses.size() == 4);
  CHECK(fs::exists(out / "metrics.csv"));
  CHECK(fs::exists(out / "checkpoint.rnanck"));
  CHECK(fs::exists(out / "weights.rnanw"));
  RnanWeights<float> final = load_weights<float>((out / "weights.rnanw").string());
  CHECK(weight_blob(final) == weight_blob(trainer.weights()));
  fs::remove_all(out);
}
