#include <benchmark/benchmark.h>

#include <random>

#include "rnan/ops.hpp"

namespace {

using rnan::Shape;
using rnan::Tensor;

template <typename T>
Tensor<T> randf(const Shape& s, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<T> v(static_cast<size_t>(s.numel()));
  for (auto& x : v)
    x = static_cast<T>((rng() >> 11) * 0x1.0p-53 - 0.5);
  return Tensor<T>::from(s, std::move(v));
}

void BM_Conv2dForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  auto x = randf<float>({1, c, 48, 48}, 1);
  auto w = randf<float>({c, c, 3, 3}, 2);
  auto b = randf<float>({c}, 3);
  for (auto _ : state) {
    auto y = rnan::conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * int64_t{2} * c * c * 9 * 48 * 48);
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(64);

void BM_Conv2dTrainStep(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  auto x = randf<float>({4, c, 32, 32}, 1);
  auto w = randf<float>({c, c, 3, 3}, 2);
  auto b = randf<float>({c}, 3);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    rnan::Tape<float> tape;
    auto y = rnan::conv2d(x, w, b, 1, 1, &tape);
    auto loss = rnan::sum(y, &tape);
    tape.backward(loss);
    w.zero_grad();
    b.zero_grad();
    benchmark::DoNotOptimize(loss.data().data());
  }
}
BENCHMARK(BM_Conv2dTrainStep)->Arg(16);

void BM_DepthwiseForward(benchmark::State& state) {
  auto x = randf<float>({1, 64, 48, 48}, 1);
  auto w = randf<float>({64, 1, 3, 3}, 2);
  auto b = randf<float>({64}, 3);
  for (auto _ : state) {
    auto y = rnan::depthwise_conv2d(x, w, b);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_DepthwiseForward);

void BM_PixelShuffle(benchmark::State& state) {
  auto x = randf<float>({1, 64, 48, 48}, 1);
  for (auto _ : state) {
    auto y = rnan::pixel_shuffle(x, 2);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_PixelShuffle);

}  // namespace
