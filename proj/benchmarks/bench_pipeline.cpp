#include <benchmark/benchmark.h>

#include <random>

#include "rnan/evaluate.hpp"
#include "rnan/metrics.hpp"
#include "rnan/model.hpp"
#include "rnan/resize.hpp"

namespace {

rnan::ImageF noise_image(int w, int h, uint64_t seed) {
  rnan::ImageF img;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(w) * h * 3);
  std::mt19937_64 rng(seed);
  for (auto& v : img.pixels) v = (rng() >> 11) * 0x1.0p-53;
  return img;
}

void BM_BicubicDown2(benchmark::State& state) {
  const rnan::ImageF img = noise_image(480, 320, 7);
  for (auto _ : state) {
    auto lr = rnan::bicubic_resize(img, 240, 160);
    benchmark::DoNotOptimize(lr.pixels.data());
  }
}
BENCHMARK(BM_BicubicDown2);

void BM_SsimY(benchmark::State& state) {
  const rnan::ImageU8 a = rnan::to_u8(noise_image(320, 240, 1));
  const rnan::ImageU8 b = rnan::to_u8(noise_image(320, 240, 2));
  for (auto _ : state) {
    benchmark::DoNotOptimize(rnan::ssim_y(a, b, 2));
  }
}
BENCHMARK(BM_SsimY);

void BM_TinyModelForward(benchmark::State& state) {
  rnan::ModelConfig cfg;
  cfg.g = 2;
  cfg.b = 2;
  cfg.c = 16;
  cfg.scale = 2;
  const auto w = rnan::init_params<float>(cfg, 0);
  const rnan::ModelFn fn = rnan::make_model_fn(w);
  const rnan::ImageF lr = noise_image(32, 32, 3);
  for (auto _ : state) {
    auto sr = fn(lr);
    benchmark::DoNotOptimize(sr.pixels.data());
  }
}
BENCHMARK(BM_TinyModelForward);

}  // namespace
