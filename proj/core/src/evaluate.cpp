#include "rnan/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "internal.hpp"
#include "rnan/metrics.hpp"
#include "rnan/resize.hpp"

namespace rnan {

namespace {

using detail::fail;
using detail::fail_runtime;

}  // namespace

ModelFn bicubic_model_fn(int scale) {
  if (scale < 1) fail("bicubic_model_fn: scale must be >= 1, got ", scale);
  return [scale](const ImageF& lr) {
    return bicubic_resize(lr, lr.width * scale, lr.height * scale);
  };
}

ModelFn make_model_fn(const RnanWeights<float>& weights,
                      std::optional<std::array<double, 3>> mean_rgb, int tile,
                      int overlap) {
  const int scale = weights.cfg.scale;
  ModelFn single = [weights, mean_rgb](const ImageF& lr) {
    ImageF in = lr;
    if (mean_rgb && in.channels == 3)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < in.height; ++y)
          for (int x = 0; x < in.width; ++x) in.at(y, x, c) -= (*mean_rgb)[c];
    Tensor<float> t = image_to_tensor<float>(in);
    Tensor<float> batched = Tensor<float>::from(
        Shape{1, 3, in.height, in.width},
        std::vector<float>(t.data().begin(), t.data().end()));
    Tensor<float> sr = rnan_forward(batched, weights);
    ImageF out = tensor_to_image(sr, 0);
    if (mean_rgb && out.channels == 3)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < out.height; ++y)
          for (int x = 0; x < out.width; ++x) out.at(y, x, c) += (*mean_rgb)[c];
    return out;
  };
  if (tile <= 0) return single;
  return [single, scale, tile, overlap](const ImageF& lr) {
    return tiled_apply(single, lr, scale, tile, overlap);
  };
}

ImageF self_ensemble(const ModelFn& model, const ImageF& lr) {
  ImageF acc;
  for (int k = 0; k < 8; ++k) {
    const ImageF sr = dihedral_inverse(model(dihedral(lr, k)), k);
    if (k == 0) {
      acc = sr;
      continue;
    }
    if (sr.width != acc.width || sr.height != acc.height ||
        sr.channels != acc.channels)
      fail_runtime("self_ensemble: output shape mismatch under transform ", k,
                   ": ", sr.width, "x", sr.height, " vs ", acc.width, "x",
                   acc.height);
    for (size_t i = 0; i < acc.pixels.size(); ++i) acc.pixels[i] += sr.pixels[i];
  }
  for (double& v : acc.pixels) v /= 8.0;
  return acc;
}

ImageF tiled_apply(const ModelFn& model, const ImageF& lr, int scale, int tile,
                   int overlap) {
  if (tile <= 0 || (lr.width <= tile && lr.height <= tile)) return model(lr);
  if (overlap < 0 || overlap >= tile)
    fail("tiled_apply: overlap ", overlap, " invalid for tile ", tile);
  const int step = tile - overlap;

  auto starts = [&](int extent) {
    std::vector<int> s;
    if (extent <= tile) {
      s.push_back(0);
      return s;
    }
    for (int p = 0;; p += step) {
      if (p + tile >= extent) {
        s.push_back(extent - tile);
        break;
      }
      s.push_back(p);
    }
    return s;
  };

  ImageF out;
  out.width = lr.width * scale;
  out.height = lr.height * scale;
  out.channels = lr.channels;
  out.pixels.assign(static_cast<size_t>(out.width) * out.height * out.channels, 0.0);
  std::vector<double> cover(static_cast<size_t>(out.width) * out.height, 0.0);

  for (int y0 : starts(lr.height)) {
    for (int x0 : starts(lr.width)) {
      const int tw = std::min(tile, lr.width - x0);
      const int th = std::min(tile, lr.height - y0);
      ImageF patch;
      patch.width = tw;
      patch.height = th;
      patch.channels = lr.channels;
      patch.pixels.resize(static_cast<size_t>(tw) * th * lr.channels);
      for (int c = 0; c < lr.channels; ++c)
        for (int y = 0; y < th; ++y)
          for (int x = 0; x < tw; ++x)
            patch.at(y, x, c) = lr.at(y0 + y, x0 + x, c);
      const ImageF sr = model(patch);
      if (sr.width != tw * scale || sr.height != th * scale)
        fail_runtime("tiled_apply: tile output ", sr.width, "x", sr.height,
                     " does not match scale ", scale);
      for (int y = 0; y < sr.height; ++y)
        for (int x = 0; x < sr.width; ++x) {
          cover[static_cast<size_t>(y0 * scale + y) * out.width +
                (x0 * scale + x)] += 1.0;
          for (int c = 0; c < out.channels; ++c)
            out.at(y0 * scale + y, x0 * scale + x, c) += sr.at(y, x, c);
        }
    }
  }
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double n = cover[static_cast<size_t>(y) * out.width + x];
      for (int c = 0; c < out.channels; ++c) out.at(y, x, c) /= n;
    }
  return out;
}

EvalReport evaluate_dataset(const ModelFn& model, const DatasetSpec& ds,
                            int scale, bool use_ensemble, int shave) {
  if (ds.items.empty()) fail_runtime("evaluate_dataset: empty dataset");
  EvalReport report;
  report.scale = scale;
  report.shave = shave < 0 ? scale : shave;
  report.ensemble = use_ensemble;

  double psnr_sum = 0.0, ssim_sum = 0.0;
  bool any_infinite = false;
  for (const auto& item : ds.items) {
    const ImageU8 hr = modcrop(load_png(item.hr_path), scale);
    ImageU8 lr;
    if (!item.lr_path.empty()) {
      lr = load_png(item.lr_path);
      if (lr.width * scale != hr.width || lr.height * scale != hr.height)
        fail_runtime("evaluate_dataset: ", item.lr_path, " does not match ",
                     item.hr_path, " at scale ", scale);
    } else {
      lr = to_u8(bicubic_resize(to_float(hr), hr.width / scale, hr.height / scale));
    }
    const ImageF lrf = to_float(lr);
    const ImageF srf = use_ensemble ? self_ensemble(model, lrf) : model(lrf);
    if (srf.width != hr.width || srf.height != hr.height)
      fail_runtime("evaluate_dataset: model produced ", srf.width, "x",
                   srf.height, " for ", hr.width, "x", hr.height, " target");
    const ImageU8 sr = to_u8(srf);

    EvalRow row;
    row.name = std::filesystem::path(item.hr_path).filename().string();
    const PsnrResult p = psnr_y(sr, hr, report.shave);
    row.psnr_db = p.db;
    row.psnr_infinite = p.infinite;
    row.ssim = ssim_y(sr, hr, report.shave);
    any_infinite = any_infinite || p.infinite;
    psnr_sum += p.db;
    ssim_sum += row.ssim;
    report.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(report.rows.size());
  report.mean_psnr = any_infinite
                         ? std::numeric_limits<double>::infinity()
                         : psnr_sum / n;
  report.mean_ssim = ssim_sum / n;
  return report;
}

std::string EvalReport::to_text() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "scale x%d  shave %d  %s\n", scale, shave,
                ensemble ? "self-ensemble" : "single pass");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-24s %10s %8s\n", "image", "psnr_db", "ssim");
  out += buf;
  for (const auto& r : rows) {
    if (r.psnr_infinite)
      std::snprintf(buf, sizeof buf, "%-24s %10s %8.4f\n", r.name.c_str(),
                    "inf", r.ssim);
    else
      std::snprintf(buf, sizeof buf, "%-24s %10.4f %8.4f\n", r.name.c_str(),
                    r.psnr_db, r.ssim);
    out += buf;
  }
  if (std::isinf(mean_psnr))
    std::snprintf(buf, sizeof buf, "%-24s %10s %8.4f\n", "mean", "inf", mean_ssim);
  else
    std::snprintf(buf, sizeof buf, "%-24s %10.4f %8.4f\n", "mean", mean_psnr,
                  mean_ssim);
  out += buf;
  return out;
}

std::string EvalReport::to_csv() const {
  std::string out = "image,psnr_db,ssim\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f\n", r.name.c_str(),
                  r.psnr_infinite ? "inf" : std::to_string(r.psnr_db).c_str(),
                  r.ssim);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "mean,%s,%.6f\n",
                std::isinf(mean_psnr) ? "inf" : std::to_string(mean_psnr).c_str(),
                mean_ssim);
  out += buf;
  return out;
}

}  // namespace rnan
