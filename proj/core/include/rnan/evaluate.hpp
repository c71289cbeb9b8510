#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rnan/data.hpp"
#include "rnan/image.hpp"
#include "rnan/model.hpp"

namespace rnan {

// A super-resolving model: float LR image in, float SR image out, both [0,1].
using ModelFn = std::function<ImageF(const ImageF&)>;

// Plain bicubic upscaler, the Table-style baseline "model".
ModelFn bicubic_model_fn(int scale);

// Wraps a weight set for inference. When mean_rgb is set it is subtracted
// before the forward pass and added back after. tile > 0 enables tiled
// inference with `overlap` LR pixels of averaged overlap.
ModelFn make_model_fn(const RnanWeights<float>& weights,
                      std::optional<std::array<double, 3>> mean_rgb = {},
                      int tile = 0, int overlap = 8);

// Averages the 8 dihedral-transformed passes of the model, each inverted
// before averaging. Rejects models whose output shape is not equivariant.
ImageF self_ensemble(const ModelFn& model, const ImageF& lr);

// Runs the model over overlapping tiles and averages the overlaps; covers
// arbitrary image sizes with bounded peak memory.
ImageF tiled_apply(const ModelFn& model, const ImageF& lr, int scale, int tile,
                   int overlap);

struct EvalRow {
  std::string name;
  double psnr_db = 0.0;
  bool psnr_infinite = false;
  double ssim = 0.0;
};

struct EvalReport {
  std::string dataset;
  int scale = 0;
  int shave = 0;
  bool ensemble = false;
  std::vector<EvalRow> rows;
  double mean_psnr = 0.0;  // arithmetic mean of rows; infinite rows propagate
  double mean_ssim = 0.0;

  std::string to_text() const;
  std::string to_csv() const;
};

// Per image: modcrop HR, load the prepared LR (or synthesize it bicubically
// when the spec lists none), run the model (optionally self-ensembled),
// quantize to 8 bits, then measure Y-channel PSNR/SSIM. shave < 0 means
// "scale pixels".
EvalReport evaluate_dataset(const ModelFn& model, const DatasetSpec& ds,
                            int scale, bool use_ensemble, int shave = -1);

}  // namespace rnan
