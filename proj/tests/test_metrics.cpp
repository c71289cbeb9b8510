#include <doctest.h>

#include <cmath>
#include <random>

#include "golden/goldens.hpp"
#include "rnan/evaluate.hpp"
#include "rnan/image.hpp"
#include "rnan/metrics.hpp"
#include "rnan/resize.hpp"

using namespace rnan;

namespace {

const std::string kDataDir = RNAN_TEST_DATA_DIR;

ImageU8 gray_image(int w, int h, uint8_t value) {
  ImageU8 img;
  img.width = w;
  img.height = h;
  img.channels = 1;
  img.pixels.assign(static_cast<size_t>(w) * h, value);
  return img;
}

ImageU8 random_rgb(int w, int h, uint64_t seed) {
  ImageU8 img;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(w) * h * 3);
  std::mt19937_64 rng(seed);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng() % 256);
  return img;
}

ImageU8 add_noise(const ImageU8& img, double sigma, uint64_t seed) {
  ImageU8 out = img;
  std::mt19937_64 rng(seed);
  auto unit = [&] { return (rng() >> 11) * 0x1.0p-53; };
  for (auto& p : out.pixels) {
    // Box-Muller
    const double u1 = std::max(unit(), 1e-12), u2 = unit();
    const double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    const double v = p + sigma * n;
    p = static_cast<uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : std::lround(v)));
  }
  return out;
}

}  // namespace

TEST_CASE("psnr closed forms") {
  const ImageU8 a = random_rgb(32, 24, 1);
  const PsnrResult same = psnr_y(a, a, 0);
  CHECK(same.infinite);

  // gray planes pass through the luma transform, so a uniform +1 offset
  // gives MSE exactly 1
  const ImageU8 g100 = gray_image(20, 20, 100);
  const ImageU8 g101 = gray_image(20, 20, 101);
  const PsnrResult p = psnr_y(g100, g101, 0);
  CHECK_FALSE(p.infinite);
  CHECK(p.db == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-9));
  CHECK(p.db == doctest::Approx(48.1308).epsilon(1e-4));

  CHECK_THROWS_AS(psnr_y(a, random_rgb(30, 24, 2), 0), std::invalid_argument);
  CHECK_THROWS_AS(psnr_y(a, a, 16), std::invalid_argument);
}

TEST_CASE("psnr decreases strictly with noise amplitude") {
  const ImageU8 base = random_rgb(48, 40, 3);
  double prev = 1e9;
  for (double sigma : {2.0, 6.0, 18.0}) {
    const PsnrResult p = psnr_y(add_noise(base, sigma, 9), base, 0);
    CHECK(p.db < prev);
    prev = p.db;
  }
}

TEST_CASE("psnr with shave equals psnr on cropped planes") {
  const ImageU8 a = random_rgb(30, 26, 4);
  const ImageU8 b = random_rgb(30, 26, 5);
  const int shave = 3;
  const PsnrResult shaved = psnr_y(a, b, shave);

  const auto ya = rgb_to_y(to_float(a));
  const auto yb = rgb_to_y(to_float(b));
  const int w = 30 - 2 * shave, h = 26 - 2 * shave;
  std::vector<double> ca(static_cast<size_t>(w) * h), cb(ca.size());
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      ca[static_cast<size_t>(i) * w + j] = ya[(i + shave) * 30 + j + shave] * 255.0;
      cb[static_cast<size_t>(i) * w + j] = yb[(i + shave) * 30 + j + shave] * 255.0;
    }
  const PsnrResult manual = psnr_plane(ca.data(), cb.data(), w, h);
  CHECK(shaved.db == manual.db);  // exactly the same computation
}

TEST_CASE("ssim identity, bounds and symmetry") {
  const ImageU8 a = random_rgb(40, 32, 6);
  CHECK(ssim_y(a, a, 0) == doctest::Approx(1.0).epsilon(1e-12));
  const ImageU8 flat = gray_image(24, 24, 128);
  const ImageU8 noisy = add_noise(flat, 3.0, 7);
  const double s = ssim_y(flat, noisy, 0);
  CHECK(s > 0.0);
  CHECK(s < 1.0);
  const ImageU8 b = add_noise(a, 10.0, 8);
  CHECK(ssim_y(a, b, 0) == doctest::Approx(ssim_y(b, a, 0)).epsilon(1e-12));
  CHECK(ssim_y(a, b, 0) >= -1.0);
  CHECK(ssim_y(a, b, 0) <= 1.0);
  CHECK_THROWS_AS(ssim_y(gray_image(8, 8, 1), gray_image(8, 8, 2), 0),
                  std::invalid_argument);
}

TEST_CASE("psnr and ssim match the independent reference values") {
  std::vector<double> a(golden::kPlaneH * golden::kPlaneW);
  std::vector<double> b(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    a[i] = golden::kPlaneA[i];
    b[i] = golden::kPlaneB[i];
  }
  const PsnrResult p = psnr_plane(a.data(), b.data(), golden::kPlaneW, golden::kPlaneH);
  CHECK(p.db == doctest::Approx(golden::kPlanePsnr).epsilon(1e-9));
  const double s = ssim_plane(a.data(), b.data(), golden::kPlaneW, golden::kPlaneH);
  CHECK(s == doctest::Approx(golden::kPlaneSsim).epsilon(1e-7));
}

TEST_CASE("self-ensemble of an equivariant model equals a single pass") {
  // identity-resolution pass-through
  const ModelFn identity = [](const ImageF& img) { return img; };
  ImageF in = to_float(random_rgb(12, 12, 10));
  const ImageF out = self_ensemble(identity, in);
  for (size_t i = 0; i < in.pixels.size(); ++i)
    CHECK(out.pixels[i] == doctest::Approx(in.pixels[i]).epsilon(1e-12));

  // bicubic commutes with the dihedral group (symmetric kernel)
  const ModelFn bicubic = bicubic_model_fn(2);
  const ImageF lr = to_float(random_rgb(9, 13, 11));
  const ImageF plain = bicubic(lr);
  const ImageF ens = self_ensemble(bicubic, lr);
  REQUIRE(ens.width == plain.width);
  REQUIRE(ens.height == plain.height);
  for (size_t i = 0; i < plain.pixels.size(); ++i)
    CHECK(std::abs(ens.pixels[i] - plain.pixels[i]) < 1e-6);

  // constant-valued output is invariant under every transform
  ImageF fixed;
  fixed.width = fixed.height = 8;
  fixed.channels = 3;
  fixed.pixels.assign(8 * 8 * 3, 0.37);
  const ModelFn constant = [fixed](const ImageF&) { return fixed; };
  const ImageF cens = self_ensemble(constant, to_float(random_rgb(4, 4, 13)));
  for (double v : cens.pixels) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

  // non-equivariant output shape is rejected
  const ModelFn bad = [](const ImageF& img) {
    ImageF out = img;
    out.width = img.width * 2;
    out.height = img.height;  // wrong
    out.pixels.assign(static_cast<size_t>(out.width) * out.height * out.channels, 0.0);
    return out;
  };
  CHECK_THROWS_AS(self_ensemble(bad, to_float(random_rgb(6, 4, 14))),
                  std::runtime_error);
}

TEST_CASE("tiled inference reproduces a tile-local model exactly") {
  // nearest-neighbor x2 is tile-local, so tiling must be exact
  const int scale = 2;
  const ModelFn nn = [](const ImageF& img) {
    ImageF out;
    out.width = img.width * 2;
    out.height = img.height * 2;
    out.channels = img.channels;
    out.pixels.resize(static_cast<size_t>(out.width) * out.height * out.channels);
    for (int c = 0; c < out.channels; ++c)
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
          out.at(y, x, c) = img.at(y / 2, x / 2, c);
    return out;
  };
  const ImageF lr = to_float(random_rgb(23, 17, 15));
  const ImageF whole = nn(lr);
  for (int tile : {8, 16}) {
    const ImageF tiled = tiled_apply(nn, lr, scale, tile, 4);
    REQUIRE(tiled.width == whole.width);
    REQUIRE(tiled.height == whole.height);
    for (size_t i = 0; i < whole.pixels.size(); ++i)
      CHECK(tiled.pixels[i] == doctest::Approx(whole.pixels[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(tiled_apply(nn, lr, scale, 8, 8), std::invalid_argument);
}

TEST_CASE("evaluate_dataset with the bicubic model hits the reference protocol") {
  DatasetSpec ds;
  ds.scale = 2;
  for (const char* name : golden::kSynthNames)
    ds.items.push_back({kDataDir + std::string("/synth/") + name, ""});
  const EvalReport report = evaluate_dataset(bicubic_model_fn(2), ds, 2, false);
  REQUIRE(report.rows.size() == 3);
  const auto& g = golden::kProtocol[0];
  for (int i = 0; i < 3; ++i) {
    CHECK(report.rows[static_cast<size_t>(i)].psnr_db ==
          doctest::Approx(g.psnr[i]).epsilon(2e-4));
    CHECK(report.rows[static_cast<size_t>(i)].ssim ==
          doctest::Approx(g.ssim[i]).epsilon(2e-4));
  }
  CHECK(std::abs(report.mean_psnr - g.mean_psnr) < 0.01);
  CHECK(std::abs(report.mean_ssim - g.mean_ssim) < 1e-4);
  CHECK(report.shave == 2);

  // report text contains the aggregate line
  const std::string text = report.to_text();
  CHECK(text.find("mean") != std::string::npos);
  const std::string csv = report.to_csv();
  CHECK(csv.find("image,psnr_db,ssim") == 0);
}
