#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <set>

#include "golden/goldens.hpp"
#include "rnan/data.hpp"
#include "rnan/image.hpp"
#include "rnan/resize.hpp"

using namespace rnan;
namespace fs = std::filesystem;

namespace {

const std::string kDataDir = RNAN_TEST_DATA_DIR;

ImageU8 random_image(int w, int h, int channels, uint64_t seed) {
  ImageU8 img;
  img.width = w;
  img.height = h;
  img.channels = channels;
  img.pixels.resize(static_cast<size_t>(w) * h * channels);
  std::mt19937_64 rng(seed);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng() % 256);
  return img;
}

ImageF gray_to_float(const unsigned char* data, int w, int h) {
  ImageF img;
  img.width = w;
  img.height = h;
  img.channels = 1;
  img.pixels.resize(static_cast<size_t>(w) * h);
  for (int i = 0; i < w * h; ++i) img.pixels[static_cast<size_t>(i)] = data[i] / 255.0;
  return img;
}

}  // namespace

TEST_CASE("png round trip is lossless") {
  const std::string path = (fs::temp_directory_path() / "rnan_png_test.png").string();
  for (int channels : {1, 3}) {
    const ImageU8 img = random_image(33, 17, channels, 5 + channels);
    save_png(img, path);
    const ImageU8 back = load_png(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.channels == img.channels);
    CHECK(back.pixels == img.pixels);
  }
  CHECK_THROWS_AS(load_png("/nonexistent/nope.png"), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("u8/float conversion rounds half away from zero") {
  ImageF img;
  img.width = 3;
  img.height = 1;
  img.channels = 1;
  img.pixels = {0.5 / 255.0, 254.5 / 255.0, 1.2};
  const ImageU8 u = to_u8(img);
  CHECK(u.pixels[0] == 1);    // 0.5 rounds up
  CHECK(u.pixels[1] == 255);  // 254.5 rounds away from zero
  CHECK(u.pixels[2] == 255);  // clamped
}

TEST_CASE("bicubic preserves constants and identity") {
  ImageF c;
  c.width = 7;
  c.height = 5;
  c.channels = 2;
  c.pixels.assign(7 * 5 * 2, 0.42);
  for (auto [w, h] : {std::pair{3, 9}, {14, 10}, {7, 5}}) {
    const ImageF out = bicubic_resize(c, w, h);
    for (double v : out.pixels) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));
  }
  ImageF r = gray_to_float(golden::kResizeSrc8x8, 8, 8);
  const ImageF same = bicubic_resize(r, 8, 8);
  for (size_t i = 0; i < r.pixels.size(); ++i)
    CHECK(same.pixels[i] == doctest::Approx(r.pixels[i]).epsilon(1e-6));
  CHECK_THROWS_AS(bicubic_resize(r, 0, 4), std::invalid_argument);
}

TEST_CASE("bicubic downscale matches the reference golden file") {
  const ImageF src = gray_to_float(golden::kResizeSrc8x8, 8, 8);
  const ImageF down = bicubic_resize(src, 4, 4);
  for (int i = 0; i < 16; ++i) {
    CHECK(down.pixels[static_cast<size_t>(i)] * 255.0 ==
          doctest::Approx(golden::kResizeDown4x4[i]).epsilon(1e-9));
  }
  const ImageU8 q = to_u8(down);
  for (int i = 0; i < 16; ++i) {
    const int diff = std::abs(int(q.pixels[static_cast<size_t>(i)]) -
                              int(golden::kResizeDown4x4U8[i]));
    CHECK(diff <= 1);
  }
}

TEST_CASE("bicubic upscale matches the reference golden file") {
  const ImageF src = gray_to_float(golden::kResizeSrc5x7, 7, 5);
  const ImageF up = bicubic_resize(src, 14, 10);
  for (int i = 0; i < 140; ++i)
    CHECK(up.pixels[static_cast<size_t>(i)] * 255.0 ==
          doctest::Approx(golden::kResizeUp10x14[i]).epsilon(1e-9));
}

TEST_CASE("bicubic is linear in pixel values") {
  const ImageF a = to_float(random_image(12, 9, 1, 21));
  const ImageF b = to_float(random_image(12, 9, 1, 22));
  ImageF mix = a;
  for (size_t i = 0; i < mix.pixels.size(); ++i)
    mix.pixels[i] = 0.3 * a.pixels[i] + 0.7 * b.pixels[i];
  const ImageF ra = bicubic_resize(a, 7, 5);
  const ImageF rb = bicubic_resize(b, 7, 5);
  const ImageF rmix = bicubic_resize(mix, 7, 5);
  for (size_t i = 0; i < rmix.pixels.size(); ++i)
    CHECK(rmix.pixels[i] ==
          doctest::Approx(0.3 * ra.pixels[i] + 0.7 * rb.pixels[i]).epsilon(1e-5));
}

TEST_CASE("luma transform constants") {
  ImageF rgb;
  rgb.width = 1;
  rgb.height = 1;
  rgb.channels = 3;
  rgb.pixels = {0.0, 0.0, 0.0};
  CHECK(rgb_to_y(rgb)[0] == doctest::Approx(16.0 / 255.0).epsilon(1e-12));
  rgb.pixels = {1.0, 1.0, 1.0};
  CHECK(rgb_to_y(rgb)[0] == doctest::Approx(235.0 / 255.0).epsilon(1e-9));
  // standard conversion row
  rgb.pixels = {1.0, 0.0, 0.0};
  CHECK(rgb_to_y(rgb)[0] * 255.0 - 16.0 == doctest::Approx(65.481).epsilon(1e-3));
  rgb.pixels = {0.0, 1.0, 0.0};
  CHECK(rgb_to_y(rgb)[0] * 255.0 - 16.0 == doctest::Approx(128.553).epsilon(1e-3));
  rgb.pixels = {0.0, 0.0, 1.0};
  CHECK(rgb_to_y(rgb)[0] * 255.0 - 16.0 == doctest::Approx(24.966).epsilon(1e-3));
}

TEST_CASE("modcrop anchors top-left") {
  const ImageU8 img = random_image(11, 7, 3, 31);
  const ImageU8 c = modcrop(img, 4);
  CHECK(c.width == 8);
  CHECK(c.height == 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x )
      for (int ch = 0; ch < 3; ++ch) CHECK(c.at(y, x, ch) == img.at(y, x, ch));
}

TEST_CASE("dihedral transforms form the square symmetry group") {
  const ImageU8 img = random_image(7, 5, 3, 40);

  SUBCASE("k=0 is the identity") {
    const ImageU8 t = dihedral(img, 0);
    CHECK(t.pixels == img.pixels);
  }
  SUBCASE("k=2 is an involution") {
    const ImageU8 t = dihedral(dihedral(img, 2), 2);
    CHECK(t.pixels == img.pixels);
  }
  SUBCASE("inverse undoes every transform exactly") {
    for (int k = 0; k < 8; ++k) {
      const ImageU8 t = dihedral_inverse(dihedral(img, k), k);
      CHECK(t.width == img.width);
      CHECK(t.pixels == img.pixels);
    }
  }
  SUBCASE("the 8 transforms are pairwise distinct on a generic image") {
    std::set<std::vector<uint8_t>> seen;
    for (int k = 0; k < 8; ++k) seen.insert(dihedral(img, k).pixels);
    CHECK(seen.size() == 8);
  }
  SUBCASE("composition stays inside the group") {
    // composing any two transforms equals exactly one group element
    for (int j = 0; j < 8; ++j)
      for (int k = 0; k < 8; ++k) {
        const ImageU8 composed = dihedral(dihedral(img, j), k);
        int matches = 0;
        for (int m = 0; m < 8; ++m) {
          const ImageU8 cand = dihedral(img, m);
          if (cand.width == composed.width && cand.pixels == composed.pixels)
            ++matches;
        }
        CHECK(matches == 1);
      }
  }
}

TEST_CASE("random_crop_pair aligns LR and HR") {
  // HR is a nearest-neighbor x2 blowup of LR, so alignment is directly visible
  const int scale = 2;
  const ImageU8 lr = random_image(10, 8, 3, 50);
  ImageU8 hr;
  hr.width = lr.width * scale;
  hr.height = lr.height * scale;
  hr.channels = 3;
  hr.pixels.resize(static_cast<size_t>(hr.width) * hr.height * 3);
  for (int y = 0; y < hr.height; ++y)
    for (int x = 0; x < hr.width; ++x)
      for (int c = 0; c < 3; ++c)
        hr.at(y, x, c) = lr.at(y / 2, x / 2, c);

  std::mt19937_64 rng(7);
  const auto pair = random_crop_pair<float>(hr, lr, 4, scale, rng);
  CHECK(pair.lr.shape() == Shape{3, 4, 4});
  CHECK(pair.hr.shape() == Shape{3, 8, 8});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        CHECK(pair.hr.data()[(c * 8 + y) * 8 + x] ==
              pair.lr.data()[(c * 4 + y / 2) * 4 + x / 2]);

  // deterministic given the rng state
  std::mt19937_64 r1(99), r2(99);
  const auto p1 = random_crop_pair<float>(hr, lr, 4, scale, r1);
  const auto p2 = random_crop_pair<float>(hr, lr, 4, scale, r2);
  CHECK(std::memcmp(p1.lr.data().data(), p2.lr.data().data(),
                    sizeof(float) * p1.lr.numel()) == 0);

  CHECK_THROWS_AS(random_crop_pair<float>(hr, lr, 64, scale, rng),
                  std::invalid_argument);
}

TEST_CASE("manifest round trip and dataset validation") {
  const fs::path dir = fs::temp_directory_path() / "rnan_manifest_test";
  fs::create_directories(dir / "HR");
  fs::create_directories(dir / "LR_x2");
  save_png(random_image(8, 8, 3, 1), (dir / "HR" / "a.png").string());
  save_png(random_image(4, 4, 3, 2), (dir / "LR_x2" / "a.png").string());

  DatasetSpec ds = scan_dataset_root(dir.string(), 2);
  REQUIRE(ds.items.size() == 1);
  CHECK_NOTHROW(ds.validate());

  const std::string mpath = (dir / "manifest.txt").string();
  save_manifest(ds, mpath);
  DatasetSpec loaded = load_manifest(mpath);
  REQUIRE(loaded.items.size() == 1);
  CHECK(fs::equivalent(loaded.items[0].hr_path, ds.items[0].hr_path));

  CHECK_THROWS_AS(scan_dataset_root(dir.string(), 3), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("batch stream is reproducible and augments jointly") {
  const std::string root = kDataDir + std::string("/train");
  DatasetSpec ds;
  ds.scale = 2;
  ds.seed = 123;
  for (const auto& name : {"train0.png", "train1.png"}) {
    const std::string hr = root + "/" + name;
    // build an LR counterpart on the fly in a temp tree
    static const fs::path dir = fs::temp_directory_path() / "rnan_bs_test";
    fs::create_directories(dir);
    const ImageU8 hr_img = modcrop(load_png(hr), 2);
    const ImageF lr = bicubic_resize(to_float(hr_img), hr_img.width / 2,
                                     hr_img.height / 2);
    const std::string lr_path = (dir / name).string();
    save_png(to_u8(lr), lr_path);
    ds.items.push_back({hr, lr_path});
  }

  BatchStream<float> s1(ds, 16, 4);
  BatchStream<float> s2(ds, 16, 4);
  const auto b1 = s1.at_step(3);
  const auto b2 = s2.at_step(3);
  CHECK(b1.lr.shape() == Shape{4, 3, 16, 16});
  CHECK(b1.hr.shape() == Shape{4, 3, 32, 32});
  CHECK(std::memcmp(b1.lr.data().data(), b2.lr.data().data(),
                    sizeof(float) * b1.lr.numel()) == 0);
  CHECK(std::memcmp(b1.hr.data().data(), b2.hr.data().data(),
                    sizeof(float) * b1.hr.numel()) == 0);
  CHECK(b1.ids == b2.ids);

  const auto b3 = s1.at_step(4);
  CHECK(std::memcmp(b1.lr.data().data(), b3.lr.data().data(),
                    sizeof(float) * b1.lr.numel()) != 0);

  DatasetSpec small = ds;
  BatchStream<float> s3(small, 16, 2);
  CHECK_THROWS_AS(BatchStream<float>(small, 4096, 2), std::runtime_error);
}
