#include "rnan/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "internal.hpp"

namespace rnan {

namespace {

using detail::fail;
using detail::fail_runtime;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageU8 load_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail_runtime("load_png: cannot open ", path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  if (!png) fail_runtime("load_png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail_runtime("load_png: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_runtime("load_png: failed to decode ", path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  ImageU8 img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = static_cast<int>(png_get_channels(png, info));
  if (img.channels != 1 && img.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_runtime("load_png: ", path, " decodes to ", img.channels,
                 " channels; only 8-bit RGB and grayscale are supported");
  }
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  const size_t stride = static_cast<size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] = img.pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void save_png(const ImageU8& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    fail("save_png: unsupported channel count ", img.channels);
  if (img.width <= 0 || img.height <= 0)
    fail("save_png: empty image");
  if (img.pixels.size() !=
      static_cast<size_t>(img.width) * img.height * img.channels)
    fail("save_png: pixel buffer size mismatch");

  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail_runtime("save_png: cannot open ", path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) fail_runtime("save_png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail_runtime("save_png: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail_runtime("save_png: failed to write ", path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t stride = static_cast<size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageF to_float(const ImageU8& img) {
  ImageF out;
  out.width = img.width;
  out.height = img.height;
  out.channels = img.channels;
  out.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        out.at(y, x, c) = img.at(y, x, c) / 255.0;
  return out;
}

ImageU8 to_u8(const ImageF& img) {
  ImageU8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = img.channels;
  out.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double v = std::round(img.at(y, x, c) * 255.0);
        out.at(y, x, c) = static_cast<uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
      }
  return out;
}

ImageU8 modcrop(const ImageU8& img, int scale) {
  if (scale < 1) fail("modcrop: scale must be >= 1, got ", scale);
  ImageU8 out;
  out.width = (img.width / scale) * scale;
  out.height = (img.height / scale) * scale;
  out.channels = img.channels;
  if (out.width == 0 || out.height == 0)
    fail("modcrop: image ", img.width, "x", img.height,
         " too small for scale ", scale);
  out.pixels.resize(static_cast<size_t>(out.width) * out.height * out.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < out.channels; ++c)
        out.at(y, x, c) = img.at(y, x, c);
  return out;
}

std::vector<double> rgb_to_y(const ImageF& img) {
  std::vector<double> y(static_cast<size_t>(img.width) * img.height);
  if (img.channels == 1) {
    for (int i = 0; i < img.height; ++i)
      for (int j = 0; j < img.width; ++j)
        y[static_cast<size_t>(i) * img.width + j] = img.at(i, j, 0);
    return y;
  }
  if (img.channels != 3) fail("rgb_to_y: expects 1 or 3 channels, got ", img.channels);
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j)
      y[static_cast<size_t>(i) * img.width + j] =
          (16.0 + 65.481 * img.at(i, j, 0) + 128.553 * img.at(i, j, 1) +
           24.966 * img.at(i, j, 2)) / 255.0;
  return y;
}

namespace {

// (y,x) source coordinate of output (i,j) under k quarter-turns CCW then
// optional horizontal flip.
template <typename Img>
Img dihedral_apply(const Img& img, int k) {
  if (k < 0 || k > 7) fail("dihedral: k must be in 0..7, got ", k);
  const int rot = k % 4;
  const bool flip = k >= 4;
  Img out;
  out.channels = img.channels;
  const bool swap = rot % 2 == 1;
  out.width = swap ? img.height : img.width;
  out.height = swap ? img.width : img.height;
  out.pixels.resize(img.pixels.size());
  for (int i = 0; i < out.height; ++i) {
    for (int j = 0; j < out.width; ++j) {
      const int jj = flip ? out.width - 1 - j : j;  // undo flip first
      int sy = 0, sx = 0;
      switch (rot) {
        case 0: sy = i; sx = jj; break;
        case 1: sy = jj; sx = img.width - 1 - i; break;           // 90 CCW
        case 2: sy = img.height - 1 - i; sx = img.width - 1 - jj; break;
        case 3: sy = img.height - 1 - jj; sx = i; break;          // 270 CCW
      }
      for (int c = 0; c < img.channels; ++c)
        out.at(i, j, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

// rotation index whose quarter-turn count is the negation of rot
constexpr int kInverseRot[4] = {0, 3, 2, 1};

}  // namespace

ImageU8 dihedral(const ImageU8& img, int k) { return dihedral_apply(img, k); }
ImageF dihedral(const ImageF& img, int k) { return dihedral_apply(img, k); }

namespace {

template <typename Img>
Img dihedral_inverse_apply(const Img& img, int k) {
  if (k < 0 || k > 7) fail("dihedral_inverse: k must be in 0..7, got ", k);
  // forward = flip o rot; inverse = rot^-1 o flip
  Img tmp = k >= 4 ? dihedral_apply(img, 4) : img;
  return dihedral_apply(tmp, kInverseRot[k % 4]);
}

}  // namespace

ImageU8 dihedral_inverse(const ImageU8& img, int k) {
  return dihedral_inverse_apply(img, k);
}
ImageF dihedral_inverse(const ImageF& img, int k) {
  return dihedral_inverse_apply(img, k);
}

}  // namespace rnan
