#pragma once

#include "rnan/image.hpp"

namespace rnan {

struct PsnrResult {
  double db = 0.0;
  bool infinite = false;  // identical planes
};

// Y-channel PSNR on the 0..255 scale: 10*log10(255^2 / MSE) after removing
// `shave` pixels from each border. Luma is computed from the 8-bit RGB values
// and kept unquantized.
PsnrResult psnr_y(const ImageU8& sr, const ImageU8& hr, int shave);

// Y-channel single-scale SSIM: 11x11 Gaussian window sigma=1.5, K1=0.01,
// K2=0.03, dynamic range 255, averaged over valid window positions.
double ssim_y(const ImageU8& sr, const ImageU8& hr, int shave);

// Same metrics on bare luma planes (0..255 scale), row-major w*h.
PsnrResult psnr_plane(const double* a, const double* b, int w, int h);
double ssim_plane(const double* a, const double* b, int w, int h);

}  // namespace rnan
