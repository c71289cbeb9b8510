#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rnan/tensor.hpp"

namespace rnan {

// Architectural hyperparameters of one network instance.
struct ModelConfig {
  int g = 10;         // residual groups
  int b = 20;         // attention blocks per group
  int c = 64;         // feature channels
  int scale = 2;      // upsampling factor, one of {2,3,4}
  int n = 2;          // group fusion interval
  int m = 2;          // block fusion interval
  int r = 16;         // context bottleneck ratio
  int dw_kernel = 3;  // depthwise kernel inside the attention gate
  int rb_kernel = 3;  // residual-body conv kernel

  // Bottleneck width of the context transform, floored at 1 so tiny test
  // configs stay legal.
  int bottleneck() const { return c / r > 0 ? c / r : 1; }

  // Throws std::invalid_argument when any invariant is violated.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// 1-based positions {interval, 2*interval, ...} plus `total`, deduplicated:
// the uniform-spaced fusion index set.
std::vector<int> fusion_indices(int total, int interval);

// Exact number of scalar parameters implied by a config, as a closed form.
int64_t count_params(const ModelConfig& cfg);

// Per-stage rows for reporting; the last row is the total.
struct ParamCount {
  std::string stage;
  int64_t params = 0;
};
std::vector<ParamCount> count_params_breakdown(const ModelConfig& cfg);

template <typename T>
struct NaWeights {
  Tensor<T> dw_w, dw_b;  // [C,1,k,k], [C]
  Tensor<T> pw_w, pw_b;  // [C,C,1,1], [C]
};

template <typename T>
struct RnaWeights {
  Tensor<T> conv1_w, conv1_b;
  Tensor<T> conv2_w, conv2_b;
  NaWeights<T> na;
};

template <typename T>
struct GcWeights {
  Tensor<T> key_w, key_b;        // C -> 1 pointwise
  Tensor<T> value1_w, value1_b;  // C -> C/r pointwise
  Tensor<T> ln_gamma, ln_beta;   // [C/r]
  Tensor<T> value2_w, value2_b;  // C/r -> C pointwise, zero-initialized
};

template <typename T>
struct FusionWeights {
  Tensor<T> reduce_w, reduce_b;  // 1x1, concat width -> C
  Tensor<T> conv_w, conv_b;      // 3x3, C -> C
};

template <typename T>
struct GroupWeights {
  std::vector<RnaWeights<T>> blocks;
  FusionWeights<T> fuse;
  GcWeights<T> gc;
};

// The complete named parameter set of one network instance. The name set and
// canonical order are a function of the config alone.
template <typename T>
struct RnanWeights {
  ModelConfig cfg;
  Tensor<T> head_w, head_b;  // 3 -> C
  std::vector<GroupWeights<T>> groups;
  FusionWeights<T> fuse;                    // global fusion
  std::vector<Tensor<T>> up_w, up_b;        // sub-pixel stages
  Tensor<T> recon_w, recon_b;               // C -> 3

  struct Named {
    std::string name;
    Tensor<T> tensor;  // aliases the weight storage
  };
  // Canonical (name, tensor) view; order is deterministic.
  std::vector<Named> parameters() const;
};

// All tensors allocated and zero-filled for a config (requires_grad set).
template <typename T>
RnanWeights<T> zero_weights(const ModelConfig& cfg);

// Deterministic initialization: conv weights Kaiming-uniform by fan-in,
// biases zero, value2 zero, LN gamma=1 beta=0.
template <typename T>
RnanWeights<T> init_params(const ModelConfig& cfg, uint64_t seed);

// Little-endian binary weight file: magic, format version, config, then
// (name length, name, shape, raw float32 data) records in canonical order.
template <typename T>
void save_weights(const RnanWeights<T>& w, const std::string& path);
template <typename T>
RnanWeights<T> load_weights(const std::string& path);
// Rejects (throws std::runtime_error) when the file's config differs.
template <typename T>
RnanWeights<T> load_weights(const std::string& path,
                            const ModelConfig& expected);

// x gated per neuron: x * sigmoid(pointwise(relu(depthwise(x)))).
template <typename T>
Tensor<T> na_forward(const Tensor<T>& x, const NaWeights<T>& w,
                     Tape<T>* tape = nullptr);

// x + na(conv -> relu -> conv applied to x).
template <typename T>
Tensor<T> rna_forward(const Tensor<T>& x, const RnaWeights<T>& w,
                      Tape<T>* tape = nullptr);

// x + broadcast bottleneck transform of the softmax-pooled global context;
// the added term is constant across spatial positions.
template <typename T>
Tensor<T> gc_forward(const Tensor<T>& x, const GcWeights<T>& w,
                     Tape<T>* tape = nullptr);

// Chain of B attention blocks, uniform-spaced fusion, local skip, then the
// global-context block.
template <typename T>
Tensor<T> gcrg_forward(const Tensor<T>& x, const GroupWeights<T>& w,
                       const ModelConfig& cfg, Tape<T>* tape = nullptr);

// Full network: [N,3,h,w] -> [N,3,scale*h,scale*w].
template <typename T>
Tensor<T> rnan_forward(const Tensor<T>& img_lr, const RnanWeights<T>& w,
                       Tape<T>* tape = nullptr);

}  // namespace rnan
