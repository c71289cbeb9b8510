#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rnan/image.hpp"
#include "rnan/tensor.hpp"

namespace rnan {

// Aligned LR/HR patch pair in [0,1] float form; hr covers exactly the
// upscaled footprint of lr.
template <typename T>
struct SamplePair {
  Tensor<T> lr;  // [3, p, p]
  Tensor<T> hr;  // [3, scale*p, scale*p]
};

struct DatasetSpec {
  struct Item {
    std::string hr_path;
    std::string lr_path;
  };
  std::vector<Item> items;
  int scale = 2;
  uint64_t seed = 0;

  // Throws when any referenced file is missing.
  void validate() const;
};

// Manifest: one `hr_path<TAB>lr_path` line per image, paths relative to the
// manifest's directory.
DatasetSpec load_manifest(const std::string& path, uint64_t seed = 0);
void save_manifest(const DatasetSpec& ds, const std::string& path);

// Directory convention: <root>/HR/*.png with <root>/LR_x{scale}/*.png, matched
// by filename.
DatasetSpec scan_dataset_root(const std::string& root, int scale,
                              uint64_t seed = 0);

// [3,h,w] tensor in [0,1] from an RGB image (grayscale replicated).
template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img);
template <typename T>
Tensor<T> image_to_tensor(const ImageF& img);

// [N,3,h,w] (or [3,h,w]) tensor back to a float image; n selects the sample.
template <typename T>
ImageF tensor_to_image(const Tensor<T>& t, int n = 0);

// LR crop at an rng-drawn (x, y), HR crop at (scale*x, scale*y); draws x then
// y from rng.
template <typename T>
SamplePair<T> random_crop_pair(const ImageU8& hr, const ImageU8& lr, int patch,
                               int scale, std::mt19937_64& rng);

// Deterministic stream of augmented training batches. Decodes the dataset up
// front; batch `step` is a pure function of (seed, step), so prefetching or
// resuming cannot change the stream.
template <typename T>
class BatchStream {
 public:
  BatchStream(const DatasetSpec& ds, int patch, int batch_size);

  struct Batch {
    Tensor<T> lr;                  // [B,3,p,p]
    Tensor<T> hr;                  // [B,3,s*p,s*p]
    std::vector<std::string> ids;  // "file@x,y/k" provenance per sample
  };
  Batch at_step(int64_t step) const;

  int patch() const { return patch_; }
  int scale() const { return scale_; }
  int batch_size() const { return batch_size_; }
  size_t images() const { return pairs_.size(); }

 private:
  std::vector<std::pair<ImageU8, ImageU8>> pairs_;  // (modcropped hr, lr)
  std::vector<std::string> names_;
  int patch_;
  int scale_;
  int batch_size_;
  uint64_t seed_;
};

}  // namespace rnan
