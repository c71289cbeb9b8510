#include "rnan/metrics.hpp"

#include <cmath>
#include <vector>

#include "internal.hpp"

namespace rnan {

namespace {

using detail::fail;

// Y planes on the 0..255 scale with `shave` border pixels removed.
std::vector<double> shaved_luma(const ImageU8& img, int shave, int& w, int& h) {
  const std::vector<double> y01 = rgb_to_y(to_float(img));
  w = img.width - 2 * shave;
  h = img.height - 2 * shave;
  std::vector<double> out(static_cast<size_t>(w) * h);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<size_t>(i) * w + j] =
          y01[static_cast<size_t>(i + shave) * img.width + (j + shave)] * 255.0;
  return out;
}

void check_pair(const ImageU8& sr, const ImageU8& hr, int shave, const char* op) {
  if (sr.width != hr.width || sr.height != hr.height)
    fail(op, ": extents differ, ", sr.width, "x", sr.height, " vs ", hr.width,
         "x", hr.height);
  if (shave < 0) fail(op, ": negative shave ", shave);
  if (sr.width <= 2 * shave || sr.height <= 2 * shave)
    fail(op, ": image ", sr.width, "x", sr.height, " too small for shave ", shave);
}

std::vector<double> gaussian_window(int radius, double sigma) {
  std::vector<double> w(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    w[static_cast<size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += w[static_cast<size_t>(i + radius)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// separable valid-mode filtering: out is (h-2r) x (w-2r)
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h,
                                 const std::vector<double>& win) {
  const int r = static_cast<int>(win.size() / 2);
  const int mw = w, mh = h - 2 * r;
  std::vector<double> mid(static_cast<size_t>(mw) * mh, 0.0);
  for (int i = 0; i < mh; ++i)
    for (int j = 0; j < mw; ++j) {
      double acc = 0.0;
      for (size_t t = 0; t < win.size(); ++t)
        acc += win[t] * img[(i + t) * static_cast<size_t>(w) + j];
      mid[static_cast<size_t>(i) * mw + j] = acc;
    }
  const int ow = w - 2 * r, oh = mh;
  std::vector<double> out(static_cast<size_t>(ow) * oh, 0.0);
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (size_t t = 0; t < win.size(); ++t)
        acc += win[t] * mid[static_cast<size_t>(i) * mw + j + t];
      out[static_cast<size_t>(i) * ow + j] = acc;
    }
  return out;
}

}  // namespace

PsnrResult psnr_plane(const double* a, const double* b, int w, int h) {
  double mse = 0.0;
  const int64_t n = int64_t{w} * h;
  for (int64_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(n);
  if (mse == 0.0) return {0.0, true};
  return {10.0 * std::log10(255.0 * 255.0 / mse), false};
}

double ssim_plane(const double* a, const double* b, int w, int h) {
  constexpr int kRadius = 5;  // 11-tap window
  constexpr double kSigma = 1.5;
  constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
  if (w < 2 * kRadius + 1 || h < 2 * kRadius + 1)
    fail("ssim: plane ", w, "x", h, " smaller than the 11x11 window");

  const std::vector<double> win = gaussian_window(kRadius, kSigma);
  const size_t n = static_cast<size_t>(w) * h;
  std::vector<double> va(a, a + n), vb(b, b + n), aa(n), bb(n), ab(n);
  for (size_t i = 0; i < n; ++i) {
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto mu1 = filter_valid(va, w, h, win);
  const auto mu2 = filter_valid(vb, w, h, win);
  const auto s11 = filter_valid(aa, w, h, win);
  const auto s22 = filter_valid(bb, w, h, win);
  const auto s12 = filter_valid(ab, w, h, win);

  double acc = 0.0;
  for (size_t i = 0; i < mu1.size(); ++i) {
    const double m1 = mu1[i], m2 = mu2[i];
    const double var1 = s11[i] - m1 * m1;
    const double var2 = s22[i] - m2 * m2;
    const double cov = s12[i] - m1 * m2;
    acc += ((2.0 * m1 * m2 + kC1) * (2.0 * cov + kC2)) /
           ((m1 * m1 + m2 * m2 + kC1) * (var1 + var2 + kC2));
  }
  return acc / static_cast<double>(mu1.size());
}

PsnrResult psnr_y(const ImageU8& sr, const ImageU8& hr, int shave) {
  check_pair(sr, hr, shave, "psnr_y");
  int w = 0, h = 0;
  const auto ya = shaved_luma(sr, shave, w, h);
  const auto yb = shaved_luma(hr, shave, w, h);
  return psnr_plane(ya.data(), yb.data(), w, h);
}

double ssim_y(const ImageU8& sr, const ImageU8& hr, int shave) {
  check_pair(sr, hr, shave, "ssim_y");
  int w = 0, h = 0;
  const auto ya = shaved_luma(sr, shave, w, h);
  const auto yb = shaved_luma(hr, shave, w, h);
  return ssim_plane(ya.data(), yb.data(), w, h);
}

}  // namespace rnan
