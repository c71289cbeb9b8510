#pragma once

#include "rnan/image.hpp"

namespace rnan {

// Bicubic resampling with reference imresize semantics: Keys cubic kernel
// (a = -0.5, 4-tap support), symmetric half-pixel coordinate mapping, kernel
// widened by the scale factor when downscaling (antialiasing), replicated
// edges, double precision. Linear in pixel values and deterministic.
ImageF bicubic_resize(const ImageF& img, int out_w, int out_h);

}  // namespace rnan
