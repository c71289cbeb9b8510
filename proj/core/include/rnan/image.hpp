#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rnan {

// 8-bit image, interleaved row-major samples, RGB order for 3 channels.
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<uint8_t> pixels;

  uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

// Float image on the [0,1] scale, planar layout (channel-major), double
// precision so resampling and metrics match reference implementations.
struct ImageF {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> pixels;  // [c][y][x]

  double& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(c) * height + y) * width + x];
  }
};

// Lossless 8-bit PNG round-trip; RGB and grayscale. Palette and 16-bit inputs
// are converted to 8-bit RGB/gray on load, alpha is stripped.
ImageU8 load_png(const std::string& path);
void save_png(const ImageU8& img, const std::string& path);

ImageF to_float(const ImageU8& img);
// Round half away from zero, clamp to [0,255].
ImageU8 to_u8(const ImageF& img);

// Crop to extents divisible by `scale` (anchored top-left).
ImageU8 modcrop(const ImageU8& img, int scale);

// Studio-swing BT.601 luma plane on the [0,1] scale:
// Y = 16/255 + (65.481 R + 128.553 G + 24.966 B)/255. Grayscale passes
// through unchanged.
std::vector<double> rgb_to_y(const ImageF& img);

// The 8 square symmetries: k%4 counter-clockwise quarter turns followed by a
// horizontal flip when k >= 4. dihedral_inverse(dihedral(x,k),k) == x exactly.
ImageU8 dihedral(const ImageU8& img, int k);
ImageU8 dihedral_inverse(const ImageU8& img, int k);
ImageF dihedral(const ImageF& img, int k);
ImageF dihedral_inverse(const ImageF& img, int k);

}  // namespace rnan
