#include "rnan/resize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "internal.hpp"

namespace rnan {

namespace {

double cubic(double x) {
  const double a = std::abs(x);
  if (a <= 1.0) return (1.5 * a - 2.5) * a * a + 1.0;
  if (a <= 2.0) return ((-0.5 * a + 2.5) * a - 4.0) * a + 2.0;
  return 0.0;
}

struct Taps {
  int taps = 0;                 // contributions per output sample
  std::vector<int> indices;     // [out_len * taps], clamped to the input
  std::vector<double> weights;  // [out_len * taps], rows sum to 1
};

Taps contributions(int in_len, int out_len) {
  const double scale = static_cast<double>(out_len) / in_len;
  double width = 4.0;
  const bool antialias = scale < 1.0;
  if (antialias) width /= scale;
  Taps t;
  t.taps = static_cast<int>(std::ceil(width)) + 2;
  t.indices.resize(static_cast<size_t>(out_len) * t.taps);
  t.weights.resize(static_cast<size_t>(out_len) * t.taps);
  for (int o = 0; o < out_len; ++o) {
    const double u = (o + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const int left = static_cast<int>(std::floor(u - width / 2.0));
    double sum = 0.0;
    for (int p = 0; p < t.taps; ++p) {
      const int idx = left + p;  // 1-based
      const double d = u - idx;
      const double w = antialias ? scale * cubic(scale * d) : cubic(d);
      t.weights[static_cast<size_t>(o) * t.taps + p] = w;
      t.indices[static_cast<size_t>(o) * t.taps + p] =
          std::clamp(idx, 1, in_len) - 1;
      sum += w;
    }
    for (int p = 0; p < t.taps; ++p)
      t.weights[static_cast<size_t>(o) * t.taps + p] /= sum;
  }
  return t;
}

}  // namespace

ImageF bicubic_resize(const ImageF& img, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0)
    detail::fail("bicubic_resize: non-positive target size ", out_w, "x", out_h);
  if (img.width <= 0 || img.height <= 0 || img.channels <= 0)
    detail::fail("bicubic_resize: empty input image");

  // rows first, then columns
  const Taps ty = contributions(img.height, out_h);
  ImageF mid;
  mid.width = img.width;
  mid.height = out_h;
  mid.channels = img.channels;
  mid.pixels.assign(static_cast<size_t>(mid.width) * mid.height * mid.channels, 0.0);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const double* w = &ty.weights[static_cast<size_t>(y) * ty.taps];
      const int* ix = &ty.indices[static_cast<size_t>(y) * ty.taps];
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int p = 0; p < ty.taps; ++p) acc += w[p] * img.at(ix[p], x, c);
        mid.at(y, x, c) = acc;
      }
    }
  }

  const Taps tx = contributions(img.width, out_w);
  ImageF out;
  out.width = out_w;
  out.height = out_h;
  out.channels = img.channels;
  out.pixels.assign(static_cast<size_t>(out_w) * out_h * out.channels, 0.0);
  for (int c = 0; c < out.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        const double* w = &tx.weights[static_cast<size_t>(x) * tx.taps];
        const int* ix = &tx.indices[static_cast<size_t>(x) * tx.taps];
        double acc = 0.0;
        for (int p = 0; p < tx.taps; ++p) acc += w[p] * mid.at(y, ix[p], c);
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

}  // namespace rnan
