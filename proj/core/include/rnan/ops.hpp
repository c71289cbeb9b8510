#pragma once

#include <vector>

#include "rnan/tensor.hpp"

namespace rnan {

// Forward ops over rank-4 tensors. Every op validates shapes up front and
// throws std::invalid_argument with a descriptive message on contract
// violations. When `tape` is non-null and any input is tracked, the op records
// its backward rule; passing nullptr runs pure inference.
//
// Convolutions are cross-correlations (no kernel flip) with zero padding.

// x:[N,Cin,H,W] w:[Cout,Cin,kH,kW] b:[Cout] -> [N,Cout,H',W'] with
// H' = (H + 2*pad - kH)/stride + 1; kH,kW odd.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad, Tape<T>* tape = nullptr);

// x:[N,C,H,W] w:[C,1,k,k] b:[C] -> [N,C,H,W]; stride 1, pad k/2. Channel c of
// the output depends only on channel c of the input.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b, Tape<T>* tape = nullptr);

// 1x1 convolution, stride 1, pad 0.
template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>& b, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x, Tape<T>* tape = nullptr);

// Per-sample normalization over the channel axis of a [N,C,1,1] tensor:
// gamma * (x - mean_C) / sqrt(var_C + eps) + beta, gamma/beta of shape [C].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps, Tape<T>* tape = nullptr);

// [N,C*s^2,H,W] -> [N,C,s*H,s*W]; out[n,c,s*i+a,s*j+b] = x[n,c*s^2+a*s+b,i,j].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int s, Tape<T>* tape = nullptr);

// Exact inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int s, Tape<T>* tape = nullptr);

// Channel-axis concatenation in argument order; N/H/W must match.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs,
                          Tape<T>* tape = nullptr);

// Softmax over all H*W positions of a [N,1,H,W] map, max-subtracted.
template <typename T>
Tensor<T> softmax_positions(const Tensor<T>& a, Tape<T>* tape = nullptr);

// out[n,c] = sum_{i,j} w[n,0,i,j] * x[n,c,i,j]  -> [N,C,1,1]
template <typename T>
Tensor<T> weighted_spatial_pool(const Tensor<T>& x, const Tensor<T>& w,
                                Tape<T>* tape = nullptr);

// Elementwise add; y may be [N,C,1,1] against x:[N,C,H,W], in which case it
// broadcasts over the spatial axes.
template <typename T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y, Tape<T>* tape = nullptr);

// Elementwise product; g may be the full shape of x or [N,C,1,1].
template <typename T>
Tensor<T> mul_broadcast(const Tensor<T>& x, const Tensor<T>& g,
                        Tape<T>* tape = nullptr);

// mean(|pred - target|) as a scalar; d/dpred = sign(pred-target)/count with
// sign(0) = 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target,
                  Tape<T>* tape = nullptr);

// Sum of all elements as a scalar.
template <typename T>
Tensor<T> sum(const Tensor<T>& x, Tape<T>* tape = nullptr);

// Definitions live in ops.cpp, instantiated for float and double.

}  // namespace rnan
