#include "rnan/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "internal.hpp"
#include "rnan/ops.hpp"

namespace rnan {

namespace {

using detail::fail;
using detail::fail_runtime;

constexpr int kSpatialKernel = 3;   // head, fusion 3x3, upsampler, reconstruction
constexpr int kImageChannels = 3;

int64_t conv_params(int k, int cin, int cout) {
  return int64_t{cout} * (int64_t{cin} * k * k + 1);
}

int upsample_stages(int scale) { return scale == 4 ? 2 : 1; }
int stage_factor(int scale) { return scale == 3 ? 3 : 2; }

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; big-endian hosts unsupported");

}  // namespace

void ModelConfig::validate() const {
  if (g < 1) fail("ModelConfig: g must be >= 1, got ", g);
  if (b < 1) fail("ModelConfig: b must be >= 1, got ", b);
  if (c < 1) fail("ModelConfig: c must be >= 1, got ", c);
  if (scale < 2 || scale > 4)
    fail("ModelConfig: scale must be one of {2,3,4}, got ", scale);
  if (n < 1) fail("ModelConfig: n must be >= 1, got ", n);
  if (m < 1) fail("ModelConfig: m must be >= 1, got ", m);
  if (r < 1) fail("ModelConfig: r must be >= 1, got ", r);
  if (dw_kernel < 1 || dw_kernel % 2 == 0)
    fail("ModelConfig: dw_kernel must be odd and positive, got ", dw_kernel);
  if (rb_kernel < 1 || rb_kernel % 2 == 0)
    fail("ModelConfig: rb_kernel must be odd and positive, got ", rb_kernel);
}

std::vector<int> fusion_indices(int total, int interval) {
  std::vector<int> out;
  for (int i = interval; i < total; i += interval) out.push_back(i);
  out.push_back(total);
  return out;
}

std::vector<ParamCount> count_params_breakdown(const ModelConfig& cfg) {
  cfg.validate();
  const int c = cfg.c, cb = cfg.bottleneck();
  const int fb = static_cast<int>(fusion_indices(cfg.b, cfg.m).size());
  const int fg = static_cast<int>(fusion_indices(cfg.g, cfg.n).size());

  const int64_t head = conv_params(kSpatialKernel, kImageChannels, c);
  const int64_t rna = 2 * conv_params(cfg.rb_kernel, c, c)
                    + int64_t{c} * (cfg.dw_kernel * cfg.dw_kernel + 1)
                    + conv_params(1, c, c);
  const int64_t group_fuse = conv_params(1, c * fb, c) + conv_params(kSpatialKernel, c, c);
  const int64_t gc = conv_params(1, c, 1) + conv_params(1, c, cb) + 2 * cb
                   + conv_params(1, cb, c);
  const int64_t global_fuse = conv_params(1, c * fg, c) + conv_params(kSpatialKernel, c, c);
  int64_t up = 0;
  for (int s = 0; s < upsample_stages(cfg.scale); ++s) {
    const int f = stage_factor(cfg.scale);
    up += conv_params(kSpatialKernel, c, c * f * f);
  }
  const int64_t recon = conv_params(kSpatialKernel, c, kImageChannels);

  std::vector<ParamCount> rows;
  rows.push_back({"head", head});
  rows.push_back({"rna blocks", int64_t{cfg.g} * cfg.b * rna});
  rows.push_back({"group fusion", int64_t{cfg.g} * group_fuse});
  rows.push_back({"gc blocks", int64_t{cfg.g} * gc});
  rows.push_back({"global fusion", global_fuse});
  rows.push_back({"upsampler", up});
  rows.push_back({"reconstruction", recon});
  int64_t total = 0;
  for (const auto& r : rows) total += r.params;
  rows.push_back({"total", total});
  return rows;
}

int64_t count_params(const ModelConfig& cfg) {
  return count_params_breakdown(cfg).back().params;
}

// Allocates the full zero weight set for a config; init_params fills it in.
template <typename T>
RnanWeights<T> zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  const int c = cfg.c, cb = cfg.bottleneck();
  auto grad_zeros = [](const Shape& s) { return Tensor<T>::zeros(s, true); };

  RnanWeights<T> w;
  w.cfg = cfg;
  w.head_w = grad_zeros({c, kImageChannels, kSpatialKernel, kSpatialKernel});
  w.head_b = grad_zeros({c});
  const int fb = static_cast<int>(fusion_indices(cfg.b, cfg.m).size());
  w.groups.resize(static_cast<size_t>(cfg.g));
  for (auto& grp : w.groups) {
    grp.blocks.resize(static_cast<size_t>(cfg.b));
    for (auto& blk : grp.blocks) {
      blk.conv1_w = grad_zeros({c, c, cfg.rb_kernel, cfg.rb_kernel});
      blk.conv1_b = grad_zeros({c});
      blk.conv2_w = grad_zeros({c, c, cfg.rb_kernel, cfg.rb_kernel});
      blk.conv2_b = grad_zeros({c});
      blk.na.dw_w = grad_zeros({c, 1, cfg.dw_kernel, cfg.dw_kernel});
      blk.na.dw_b = grad_zeros({c});
      blk.na.pw_w = grad_zeros({c, c, 1, 1});
      blk.na.pw_b = grad_zeros({c});
    }
    grp.fuse.reduce_w = grad_zeros({c, c * fb, 1, 1});
    grp.fuse.reduce_b = grad_zeros({c});
    grp.fuse.conv_w = grad_zeros({c, c, kSpatialKernel, kSpatialKernel});
    grp.fuse.conv_b = grad_zeros({c});
    grp.gc.key_w = grad_zeros({1, c, 1, 1});
    grp.gc.key_b = grad_zeros({1});
    grp.gc.value1_w = grad_zeros({cb, c, 1, 1});
    grp.gc.value1_b = grad_zeros({cb});
    grp.gc.ln_gamma = grad_zeros({cb});
    grp.gc.ln_beta = grad_zeros({cb});
    grp.gc.value2_w = grad_zeros({c, cb, 1, 1});
    grp.gc.value2_b = grad_zeros({c});
  }
  const int fg = static_cast<int>(fusion_indices(cfg.g, cfg.n).size());
  w.fuse.reduce_w = grad_zeros({c, c * fg, 1, 1});
  w.fuse.reduce_b = grad_zeros({c});
  w.fuse.conv_w = grad_zeros({c, c, kSpatialKernel, kSpatialKernel});
  w.fuse.conv_b = grad_zeros({c});
  for (int s = 0; s < upsample_stages(cfg.scale); ++s) {
    const int f = stage_factor(cfg.scale);
    w.up_w.push_back(grad_zeros({c * f * f, c, kSpatialKernel, kSpatialKernel}));
    w.up_b.push_back(grad_zeros({c * f * f}));
  }
  w.recon_w = grad_zeros({kImageChannels, c, kSpatialKernel, kSpatialKernel});
  w.recon_b = grad_zeros({kImageChannels});
  return w;
}

template <typename T>
std::vector<typename RnanWeights<T>::Named> RnanWeights<T>::parameters() const {
  std::vector<Named> out;
  auto push = [&out](std::string name, const Tensor<T>& t) {
    out.push_back({std::move(name), t});
  };
  push("head.weight", head_w);
  push("head.bias", head_b);
  for (size_t g = 0; g < groups.size(); ++g) {
    const std::string gp = "gcrg." + std::to_string(g) + ".";
    const auto& grp = groups[g];
    for (size_t b = 0; b < grp.blocks.size(); ++b) {
      const std::string bp = gp + "rna." + std::to_string(b) + ".";
      const auto& blk = grp.blocks[b];
      push(bp + "conv1.weight", blk.conv1_w);
      push(bp + "conv1.bias", blk.conv1_b);
      push(bp + "conv2.weight", blk.conv2_w);
      push(bp + "conv2.bias", blk.conv2_b);
      push(bp + "na.depthwise.weight", blk.na.dw_w);
      push(bp + "na.depthwise.bias", blk.na.dw_b);
      push(bp + "na.pointwise.weight", blk.na.pw_w);
      push(bp + "na.pointwise.bias", blk.na.pw_b);
    }
    push(gp + "fuse.reduce.weight", grp.fuse.reduce_w);
    push(gp + "fuse.reduce.bias", grp.fuse.reduce_b);
    push(gp + "fuse.conv.weight", grp.fuse.conv_w);
    push(gp + "fuse.conv.bias", grp.fuse.conv_b);
    push(gp + "gc.key.weight", grp.gc.key_w);
    push(gp + "gc.key.bias", grp.gc.key_b);
    push(gp + "gc.value1.weight", grp.gc.value1_w);
    push(gp + "gc.value1.bias", grp.gc.value1_b);
    push(gp + "gc.ln.gamma", grp.gc.ln_gamma);
    push(gp + "gc.ln.beta", grp.gc.ln_beta);
    push(gp + "gc.value2.weight", grp.gc.value2_w);
    push(gp + "gc.value2.bias", grp.gc.value2_b);
  }
  push("fusion.reduce.weight", fuse.reduce_w);
  push("fusion.reduce.bias", fuse.reduce_b);
  push("fusion.conv.weight", fuse.conv_w);
  push("fusion.conv.bias", fuse.conv_b);
  for (size_t s = 0; s < up_w.size(); ++s) {
    push("upsample." + std::to_string(s) + ".weight", up_w[s]);
    push("upsample." + std::to_string(s) + ".bias", up_b[s]);
  }
  push("recon.weight", recon_w);
  push("recon.bias", recon_b);
  return out;
}

namespace {

// u64 -> [0,1) with full 53-bit mantissa; mt19937_64 keeps this portable
// across standard libraries (std::uniform_real_distribution is not).
inline double unit_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

template <typename T>
RnanWeights<T> init_params(const ModelConfig& cfg, uint64_t seed) {
  RnanWeights<T> w = zero_weights<T>(cfg);
  std::mt19937_64 rng(seed);
  for (auto& [name, tensor] : w.parameters()) {
    const bool is_weight = name.ends_with(".weight");
    if (!is_weight) {
      if (name.ends_with("ln.gamma"))
        for (auto& v : tensor.data()) v = T(1);
      continue;  // biases and ln.beta stay zero
    }
    if (name.ends_with("gc.value2.weight")) continue;  // zero-init transform
    const Shape& s = tensor.shape();
    const int64_t fan_in = int64_t{s[1]} * s[2] * s[3];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : tensor.data())
      v = static_cast<T>((2.0 * unit_double(rng) - 1.0) * bound);
  }
  return w;
}

// ------------------------------------------------------------- weight file

namespace {

constexpr char kMagic[8] = {'R', 'N', 'A', 'N', 'W', 'G', 'T', '1'};
constexpr uint32_t kFormatVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_i32(std::ostream& os, int32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

int32_t read_i32(std::istream& is) {
  int32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_config(std::ostream& os, const ModelConfig& c) {
  for (int v : {c.g, c.b, c.c, c.scale, c.n, c.m, c.r, c.dw_kernel, c.rb_kernel})
    write_i32(os, v);
}

ModelConfig read_config(std::istream& is) {
  ModelConfig c;
  c.g = read_i32(is);
  c.b = read_i32(is);
  c.c = read_i32(is);
  c.scale = read_i32(is);
  c.n = read_i32(is);
  c.m = read_i32(is);
  c.r = read_i32(is);
  c.dw_kernel = read_i32(is);
  c.rb_kernel = read_i32(is);
  return c;
}

std::string config_str(const ModelConfig& c) {
  std::ostringstream os;
  os << "g=" << c.g << " b=" << c.b << " c=" << c.c << " scale=" << c.scale
     << " n=" << c.n << " m=" << c.m << " r=" << c.r << " dw=" << c.dw_kernel
     << " rb=" << c.rb_kernel;
  return os.str();
}

}  // namespace

template <typename T>
void save_weights(const RnanWeights<T>& w, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail_runtime("save_weights: cannot open ", path);
  os.write(kMagic, sizeof kMagic);
  write_u32(os, kFormatVersion);
  write_config(os, w.cfg);
  const auto params = w.parameters();
  write_u32(os, static_cast<uint32_t>(params.size()));
  std::vector<float> buf;
  for (const auto& [name, tensor] : params) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& s = tensor.shape();
    write_u32(os, static_cast<uint32_t>(s.rank()));
    for (int i = 0; i < s.rank(); ++i) write_u32(os, static_cast<uint32_t>(s[i]));
    buf.resize(static_cast<size_t>(tensor.numel()));
    auto src = tensor.data();
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(src[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) fail_runtime("save_weights: write failed for ", path);
}

template <typename T>
RnanWeights<T> load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_runtime("load_weights: cannot open ", path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    fail_runtime("load_weights: ", path, " is not a weight file");
  const uint32_t version = read_u32(is);
  if (version != kFormatVersion)
    fail_runtime("load_weights: unsupported format version ", version);
  const ModelConfig cfg = read_config(is);
  RnanWeights<T> w = zero_weights<T>(cfg);
  auto params = w.parameters();
  const uint32_t count = read_u32(is);
  if (count != params.size())
    fail_runtime("load_weights: ", path, " has ", count, " parameters, config ",
                 config_str(cfg), " implies ", params.size());
  std::vector<float> buf;
  for (auto& [name, tensor] : params) {
    const uint32_t len = read_u32(is);
    std::string fname(len, '\0');
    is.read(fname.data(), len);
    if (fname != name)
      fail_runtime("load_weights: expected parameter '", name, "', found '",
                   fname, "'");
    const uint32_t rank = read_u32(is);
    if (rank != static_cast<uint32_t>(tensor.shape().rank()))
      fail_runtime("load_weights: rank mismatch for ", name);
    for (uint32_t i = 0; i < rank; ++i) {
      const uint32_t d = read_u32(is);
      if (d != static_cast<uint32_t>(tensor.shape()[static_cast<int>(i)]))
        fail_runtime("load_weights: shape mismatch for ", name);
    }
    buf.resize(static_cast<size_t>(tensor.numel()));
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) fail_runtime("load_weights: truncated file ", path);
    auto dst = tensor.data();
    for (size_t i = 0; i < buf.size(); ++i) dst[i] = static_cast<T>(buf[i]);
  }
  return w;
}

template <typename T>
RnanWeights<T> load_weights(const std::string& path,
                            const ModelConfig& expected) {
  RnanWeights<T> w = load_weights<T>(path);
  if (!(w.cfg == expected))
    fail_runtime("load_weights: config mismatch for ", path, ": file has ",
                 config_str(w.cfg), ", expected ", config_str(expected));
  return w;
}

// ---------------------------------------------------------------- forward

namespace {
constexpr double kLayerNormEps = 1e-5;
}

template <typename T>
Tensor<T> na_forward(const Tensor<T>& x, const NaWeights<T>& w, Tape<T>* tape) {
  Tensor<T> gate = depthwise_conv2d(x, w.dw_w, w.dw_b, tape);
  gate = relu(gate, tape);
  gate = pointwise_conv(gate, w.pw_w, w.pw_b, tape);
  gate = sigmoid(gate, tape);
  return mul_broadcast(x, gate, tape);
}

template <typename T>
Tensor<T> rna_forward(const Tensor<T>& x, const RnaWeights<T>& w, Tape<T>* tape) {
  const int pad = w.conv1_w.shape()[2] / 2;
  Tensor<T> h = conv2d(x, w.conv1_w, w.conv1_b, 1, pad, tape);
  h = relu(h, tape);
  h = conv2d(h, w.conv2_w, w.conv2_b, 1, pad, tape);
  return add(x, na_forward(h, w.na, tape), tape);
}

template <typename T>
Tensor<T> gc_forward(const Tensor<T>& x, const GcWeights<T>& w, Tape<T>* tape) {
  Tensor<T> attn = softmax_positions(pointwise_conv(x, w.key_w, w.key_b, tape), tape);
  Tensor<T> ctx = weighted_spatial_pool(x, attn, tape);
  Tensor<T> t = pointwise_conv(ctx, w.value1_w, w.value1_b, tape);
  t = layer_norm(t, w.ln_gamma, w.ln_beta, static_cast<T>(kLayerNormEps), tape);
  t = relu(t, tape);
  t = pointwise_conv(t, w.value2_w, w.value2_b, tape);
  return add(x, t, tape);  // broadcast over spatial positions
}

template <typename T>
Tensor<T> gcrg_forward(const Tensor<T>& x, const GroupWeights<T>& w,
                       const ModelConfig& cfg, Tape<T>* tape) {
  const std::vector<int> idx = fusion_indices(cfg.b, cfg.m);
  std::vector<Tensor<T>> selected;
  selected.reserve(idx.size());
  Tensor<T> cur = x;
  size_t next = 0;
  for (int bi = 1; bi <= cfg.b; ++bi) {
    cur = rna_forward(cur, w.blocks[static_cast<size_t>(bi - 1)], tape);
    if (next < idx.size() && idx[next] == bi) {
      selected.push_back(cur);
      ++next;
    }
  }
  Tensor<T> fused = concat_channels(selected, tape);
  fused = pointwise_conv(fused, w.fuse.reduce_w, w.fuse.reduce_b, tape);
  fused = conv2d(fused, w.fuse.conv_w, w.fuse.conv_b, 1, kSpatialKernel / 2, tape);
  return gc_forward(add(x, fused, tape), w.gc, tape);
}

template <typename T>
Tensor<T> rnan_forward(const Tensor<T>& img_lr, const RnanWeights<T>& w,
                       Tape<T>* tape) {
  const ModelConfig& cfg = w.cfg;
  cfg.validate();
  const Shape& s = img_lr.shape();
  if (s.rank() != 4 || s[1] != kImageChannels)
    fail("rnan_forward: input must be [N,3,h,w], got ", s.str());

  Tensor<T> f0 = conv2d(img_lr, w.head_w, w.head_b, 1, kSpatialKernel / 2, tape);

  const std::vector<int> idx = fusion_indices(cfg.g, cfg.n);
  std::vector<Tensor<T>> selected;
  selected.reserve(idx.size());
  Tensor<T> cur = f0;
  size_t next = 0;
  for (int gi = 1; gi <= cfg.g; ++gi) {
    cur = gcrg_forward(cur, w.groups[static_cast<size_t>(gi - 1)], cfg, tape);
    if (next < idx.size() && idx[next] == gi) {
      selected.push_back(cur);
      ++next;
    }
  }
  Tensor<T> fused = concat_channels(selected, tape);
  fused = pointwise_conv(fused, w.fuse.reduce_w, w.fuse.reduce_b, tape);
  fused = conv2d(fused, w.fuse.conv_w, w.fuse.conv_b, 1, kSpatialKernel / 2, tape);
  Tensor<T> feat = add(f0, fused, tape);

  for (size_t stage = 0; stage < w.up_w.size(); ++stage) {
    feat = conv2d(feat, w.up_w[stage], w.up_b[stage], 1, kSpatialKernel / 2, tape);
    feat = pixel_shuffle(feat, stage_factor(cfg.scale), tape);
  }
  return conv2d(feat, w.recon_w, w.recon_b, 1, kSpatialKernel / 2, tape);
}

#define RNAN_INSTANTIATE_MODEL(T)                                             \
  template struct RnanWeights<T>;                                             \
  template RnanWeights<T> zero_weights(const ModelConfig&);                   \
  template RnanWeights<T> init_params(const ModelConfig&, uint64_t);          \
  template void save_weights(const RnanWeights<T>&, const std::string&);      \
  template RnanWeights<T> load_weights(const std::string&);                   \
  template RnanWeights<T> load_weights(const std::string&,                    \
                                       const ModelConfig&);                   \
  template Tensor<T> na_forward(const Tensor<T>&, const NaWeights<T>&,        \
                                Tape<T>*);                                    \
  template Tensor<T> rna_forward(const Tensor<T>&, const RnaWeights<T>&,      \
                                 Tape<T>*);                                   \
  template Tensor<T> gc_forward(const Tensor<T>&, const GcWeights<T>&,        \
                                Tape<T>*);                                    \
  template Tensor<T> gcrg_forward(const Tensor<T>&, const GroupWeights<T>&,   \
                                  const ModelConfig&, Tape<T>*);              \
  template Tensor<T> rnan_forward(const Tensor<T>&, const RnanWeights<T>&,    \
                                  Tape<T>*)

RNAN_INSTANTIATE_MODEL(float);
RNAN_INSTANTIATE_MODEL(double);
#undef RNAN_INSTANTIATE_MODEL

}  // namespace rnan
