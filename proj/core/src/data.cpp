#include "rnan/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "internal.hpp"

namespace fs = std::filesystem;

namespace rnan {

namespace {

using detail::fail;
using detail::fail_runtime;

uint64_t mix64(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ImageU8 crop_u8(const ImageU8& img, int x0, int y0, int w, int h) {
  ImageU8 out;
  out.width = w;
  out.height = h;
  out.channels = img.channels;
  out.pixels.resize(static_cast<size_t>(w) * h * img.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

}  // namespace

void DatasetSpec::validate() const {
  if (items.empty()) fail_runtime("DatasetSpec: no images");
  for (const auto& it : items) {
    if (!fs::exists(it.hr_path))
      fail_runtime("DatasetSpec: missing HR file ", it.hr_path);
    if (!it.lr_path.empty() && !fs::exists(it.lr_path))
      fail_runtime("DatasetSpec: missing LR file ", it.lr_path);
  }
}

DatasetSpec load_manifest(const std::string& path, uint64_t seed) {
  std::ifstream is(path);
  if (!is) fail_runtime("load_manifest: cannot open ", path);
  const fs::path base = fs::path(path).parent_path();
  DatasetSpec ds;
  ds.seed = seed;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      fail_runtime("load_manifest: malformed line in ", path, ": ", line);
    ds.items.push_back({(base / line.substr(0, tab)).string(),
                        (base / line.substr(tab + 1)).string()});
  }
  if (ds.items.empty()) fail_runtime("load_manifest: ", path, " lists no images");
  return ds;
}

void save_manifest(const DatasetSpec& ds, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail_runtime("save_manifest: cannot open ", path);
  const fs::path base = fs::path(path).parent_path();
  for (const auto& it : ds.items)
    os << fs::relative(it.hr_path, base).string() << '\t'
       << fs::relative(it.lr_path, base).string() << '\n';
}

DatasetSpec scan_dataset_root(const std::string& root, int scale,
                              uint64_t seed) {
  const fs::path hr_dir = fs::path(root) / "HR";
  const fs::path lr_dir = fs::path(root) / ("LR_x" + std::to_string(scale));
  if (!fs::is_directory(hr_dir))
    fail_runtime("scan_dataset_root: missing directory ", hr_dir.string());
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(hr_dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty())
    fail_runtime("scan_dataset_root: no .png files under ", hr_dir.string());
  DatasetSpec ds;
  ds.scale = scale;
  ds.seed = seed;
  for (const auto& n : names) {
    const fs::path lr = lr_dir / n;
    if (!fs::exists(lr))
      fail_runtime("scan_dataset_root: missing LR counterpart ", lr.string());
    ds.items.push_back({(hr_dir / n).string(), lr.string()});
  }
  return ds;
}

template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img) {
  const int h = img.height, w = img.width;
  Tensor<T> t = Tensor<T>::zeros(Shape{3, h, w});
  auto d = t.data();
  for (int c = 0; c < 3; ++c) {
    const int sc = img.channels == 3 ? c : 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        d[(static_cast<int64_t>(c) * h + y) * w + x] =
            static_cast<T>(img.at(y, x, sc) / 255.0);
  }
  return t;
}

template <typename T>
Tensor<T> image_to_tensor(const ImageF& img) {
  const int h = img.height, w = img.width;
  Tensor<T> t = Tensor<T>::zeros(Shape{3, h, w});
  auto d = t.data();
  for (int c = 0; c < 3; ++c) {
    const int sc = img.channels == 3 ? c : 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        d[(static_cast<int64_t>(c) * h + y) * w + x] =
            static_cast<T>(img.at(y, x, sc));
  }
  return t;
}

template <typename T>
ImageF tensor_to_image(const Tensor<T>& t, int n) {
  const Shape& s = t.shape();
  int c0 = 0, h = 0, w = 0, ch = 0;
  if (s.rank() == 4) {
    if (n < 0 || n >= s[0]) fail("tensor_to_image: sample ", n, " out of range");
    ch = s[1]; h = s[2]; w = s[3];
    c0 = n * ch;
  } else if (s.rank() == 3) {
    ch = s[0]; h = s[1]; w = s[2];
  } else {
    fail("tensor_to_image: expects rank 3 or 4, got ", s.str());
  }
  ImageF img;
  img.width = w;
  img.height = h;
  img.channels = ch;
  img.pixels.resize(static_cast<size_t>(w) * h * ch);
  auto d = t.data();
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(y, x, c) = static_cast<double>(
            d[(static_cast<int64_t>(c0 + c) * h + y) * w + x]);
  return img;
}

template <typename T>
SamplePair<T> random_crop_pair(const ImageU8& hr, const ImageU8& lr, int patch,
                               int scale, std::mt19937_64& rng) {
  if (patch < 1) fail("random_crop_pair: patch must be >= 1, got ", patch);
  if (lr.width < patch || lr.height < patch)
    fail("random_crop_pair: LR image ", lr.width, "x", lr.height,
         " smaller than patch ", patch);
  if (hr.width != scale * lr.width || hr.height != scale * lr.height)
    fail("random_crop_pair: HR ", hr.width, "x", hr.height, " is not ", scale,
         "x the LR ", lr.width, "x", lr.height);
  const int x = static_cast<int>(rng() % static_cast<uint64_t>(lr.width - patch + 1));
  const int y = static_cast<int>(rng() % static_cast<uint64_t>(lr.height - patch + 1));
  SamplePair<T> out;
  out.lr = image_to_tensor<T>(crop_u8(lr, x, y, patch, patch));
  out.hr = image_to_tensor<T>(
      crop_u8(hr, scale * x, scale * y, scale * patch, scale * patch));
  return out;
}

template <typename T>
BatchStream<T>::BatchStream(const DatasetSpec& ds, int patch, int batch_size)
    : patch_(patch), scale_(ds.scale), batch_size_(batch_size), seed_(ds.seed) {
  if (patch < 1) fail("BatchStream: patch must be >= 1, got ", patch);
  if (batch_size < 1) fail("BatchStream: batch size must be >= 1, got ", batch_size);
  ds.validate();
  for (const auto& it : ds.items) {
    ImageU8 hr = modcrop(load_png(it.hr_path), ds.scale);
    ImageU8 lr = load_png(it.lr_path);
    if (lr.width * ds.scale != hr.width || lr.height * ds.scale != hr.height)
      fail_runtime("BatchStream: ", it.lr_path, " (", lr.width, "x", lr.height,
                   ") does not match ", it.hr_path, " at scale ", ds.scale);
    if (lr.width < patch || lr.height < patch)
      fail_runtime("BatchStream: ", it.lr_path, " (", lr.width, "x", lr.height,
                   ") smaller than patch ", patch);
    pairs_.emplace_back(std::move(hr), std::move(lr));
    names_.push_back(fs::path(it.lr_path).filename().string());
  }
}

template <typename T>
typename BatchStream<T>::Batch BatchStream<T>::at_step(int64_t step) const {
  const int p = patch_, sp = scale_ * patch_;
  Batch out;
  out.lr = Tensor<T>::zeros(Shape{batch_size_, 3, p, p});
  out.hr = Tensor<T>::zeros(Shape{batch_size_, 3, sp, sp});
  auto lrd = out.lr.data();
  auto hrd = out.hr.data();
  for (int i = 0; i < batch_size_; ++i) {
    std::mt19937_64 rng(
        mix64(seed_, static_cast<uint64_t>(step) * batch_size_ + i));
    const size_t img = rng() % pairs_.size();
    const auto& [hr, lr] = pairs_[img];
    const int x = static_cast<int>(rng() % static_cast<uint64_t>(lr.width - p + 1));
    const int y = static_cast<int>(rng() % static_cast<uint64_t>(lr.height - p + 1));
    const int k = static_cast<int>(rng() % 8);
    const ImageU8 lrc = dihedral(crop_u8(lr, x, y, p, p), k);
    const ImageU8 hrc =
        dihedral(crop_u8(hr, scale_ * x, scale_ * y, sp, sp), k);
    for (int c = 0; c < 3; ++c) {
      const int sc = lrc.channels == 3 ? c : 0;
      for (int yy = 0; yy < p; ++yy)
        for (int xx = 0; xx < p; ++xx)
          lrd[((static_cast<int64_t>(i) * 3 + c) * p + yy) * p + xx] =
              static_cast<T>(lrc.at(yy, xx, sc) / 255.0);
      for (int yy = 0; yy < sp; ++yy)
        for (int xx = 0; xx < sp; ++xx)
          hrd[((static_cast<int64_t>(i) * 3 + c) * sp + yy) * sp + xx] =
              static_cast<T>(hrc.at(yy, xx, sc) / 255.0);
    }
    out.ids.push_back(names_[img] + "@" + std::to_string(x) + "," +
                      std::to_string(y) + "/" + std::to_string(k));
  }
  return out;
}

template Tensor<float> image_to_tensor<float>(const ImageU8&);
template Tensor<double> image_to_tensor<double>(const ImageU8&);
template Tensor<float> image_to_tensor<float>(const ImageF&);
template Tensor<double> image_to_tensor<double>(const ImageF&);
template ImageF tensor_to_image(const Tensor<float>&, int);
template ImageF tensor_to_image(const Tensor<double>&, int);
template SamplePair<float> random_crop_pair(const ImageU8&, const ImageU8&,
                                            int, int, std::mt19937_64&);
template SamplePair<double> random_crop_pair(const ImageU8&, const ImageU8&,
                                             int, int, std::mt19937_64&);
template class BatchStream<float>;
template class BatchStream<double>;

}  // namespace rnan
