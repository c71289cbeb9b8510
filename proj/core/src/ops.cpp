#include "rnan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "internal.hpp"
#include "rnan/parallel.hpp"

namespace rnan {

namespace {

using detail::fail;

template <typename T>
void check_finite(const char* op, const Tensor<T>& t) {
  if (!detail::finite_checks_enabled()) return;
  for (T v : t.data())
    if (!std::isfinite(static_cast<double>(v)))
      detail::fail_runtime(op, ": non-finite value in output");
}

inline int ceil_div(int a, int b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

// chunk size (in outer items) aiming at ~128k inner operations per task
inline int64_t grain_for(int64_t per_item_work) {
  return std::max<int64_t>(1, (int64_t{1} << 17) / std::max<int64_t>(1, per_item_work));
}

template <typename T>
bool recording(Tape<T>* tape, std::initializer_list<const Tensor<T>*> ins) {
  if (!tape) return false;
  for (const Tensor<T>* t : ins)
    if (t->tracked()) return true;
  return false;
}

// ---------------------------------------------------------------- conv2d

template <typename T>
void conv_forward_kernel(const T* __restrict x, const T* __restrict w,
                         const T* __restrict b, T* __restrict y, int N, int Cin,
                         int H, int W, int Cout, int kH, int kW, int stride,
                         int pad, int Ho, int Wo) {
  const int64_t per = int64_t{Cin} * kH * kW * Ho * Wo;
  parallel_for(int64_t{N} * Cout, grain_for(per), [=](int64_t lo, int64_t hi) {
    for (int64_t no = lo; no < hi; ++no) {
      const int n = static_cast<int>(no / Cout);
      const int o = static_cast<int>(no % Cout);
      T* __restrict yb = y + no * Ho * Wo;
      const T bo = b[o];
      for (int64_t i = 0; i < int64_t{Ho} * Wo; ++i) yb[i] = bo;
      for (int c = 0; c < Cin; ++c) {
        const T* __restrict xc = x + (int64_t{n} * Cin + c) * H * W;
        const T* __restrict wc = w + (int64_t{o} * Cin + c) * kH * kW;
        for (int u = 0; u < kH; ++u) {
          for (int v = 0; v < kW; ++v) {
            const T wv = wc[u * kW + v];
            if (stride == 1) {
              const int j0 = std::max(0, pad - v);
              const int j1 = std::min(Wo, W + pad - v);
              for (int i = 0; i < Ho; ++i) {
                const int ih = i + u - pad;
                if (ih < 0 || ih >= H) continue;
                const T* __restrict xr = xc + int64_t{ih} * W + (v - pad);
                T* __restrict yr = yb + int64_t{i} * Wo;
                for (int j = j0; j < j1; ++j) yr[j] += wv * xr[j];
              }
            } else {
              const int j0 = std::max(0, ceil_div(pad - v, stride));
              const int j1 = std::min(Wo, ceil_div(W + pad - v, stride));
              for (int i = 0; i < Ho; ++i) {
                const int ih = i * stride + u - pad;
                if (ih < 0 || ih >= H) continue;
                const T* __restrict xr = xc + int64_t{ih} * W;
                T* __restrict yr = yb + int64_t{i} * Wo;
                for (int j = j0; j < j1; ++j)
                  yr[j] += wv * xr[j * stride + v - pad];
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
void conv_backward_input_kernel(const T* __restrict dy, const T* __restrict w,
                                T* __restrict dx, int N, int Cin, int H, int W,
                                int Cout, int kH, int kW, int stride, int pad,
                                int Ho, int Wo) {
  const int64_t per = int64_t{Cout} * kH * kW * Ho * Wo;
  parallel_for(int64_t{N} * Cin, grain_for(per), [=](int64_t lo, int64_t hi) {
    for (int64_t nc = lo; nc < hi; ++nc) {
      const int n = static_cast<int>(nc / Cin);
      const int c = static_cast<int>(nc % Cin);
      T* __restrict dxc = dx + nc * H * W;
      for (int o = 0; o < Cout; ++o) {
        const T* __restrict dyo = dy + (int64_t{n} * Cout + o) * Ho * Wo;
        const T* __restrict wc = w + (int64_t{o} * Cin + c) * kH * kW;
        for (int u = 0; u < kH; ++u) {
          for (int v = 0; v < kW; ++v) {
            const T wv = wc[u * kW + v];
            if (stride == 1) {
              const int j0 = std::max(0, pad - v);
              const int j1 = std::min(Wo, W + pad - v);
              for (int i = 0; i < Ho; ++i) {
                const int ih = i + u - pad;
                if (ih < 0 || ih >= H) continue;
                T* __restrict dxr = dxc + int64_t{ih} * W + (v - pad);
                const T* __restrict dyr = dyo + int64_t{i} * Wo;
                for (int j = j0; j < j1; ++j) dxr[j] += wv * dyr[j];
              }
            } else {
              const int j0 = std::max(0, ceil_div(pad - v, stride));
              const int j1 = std::min(Wo, ceil_div(W + pad - v, stride));
              for (int i = 0; i < Ho; ++i) {
                const int ih = i * stride + u - pad;
                if (ih < 0 || ih >= H) continue;
                T* __restrict dxr = dxc + int64_t{ih} * W;
                const T* __restrict dyr = dyo + int64_t{i} * Wo;
                for (int j = j0; j < j1; ++j)
                  dxr[j * stride + v - pad] += wv * dyr[j];
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
void conv_backward_weight_kernel(const T* __restrict x, const T* __restrict dy,
                                 T* __restrict dw, T* __restrict db, int N,
                                 int Cin, int H, int W, int Cout, int kH,
                                 int kW, int stride, int pad, int Ho, int Wo) {
  const int64_t per = int64_t{N} * Cin * kH * kW * Ho * Wo;
  parallel_for(Cout, grain_for(per), [=](int64_t lo, int64_t hi) {
    for (int64_t o = lo; o < hi; ++o) {
      T* __restrict dwo = dw ? dw + o * Cin * kH * kW : nullptr;
      T dbacc = 0;
      for (int n = 0; n < N; ++n) {
        const T* __restrict dyo = dy + (int64_t{n} * Cout + o) * Ho * Wo;
        if (db) {
          for (int64_t i = 0; i < int64_t{Ho} * Wo; ++i) dbacc += dyo[i];
        }
        if (!dw) continue;
        for (int c = 0; c < Cin; ++c) {
          const T* __restrict xc = x + (int64_t{n} * Cin + c) * H * W;
          for (int u = 0; u < kH; ++u) {
            for (int v = 0; v < kW; ++v) {
              T acc = 0;
              if (stride == 1) {
                const int j0 = std::max(0, pad - v);
                const int j1 = std::min(Wo, W + pad - v);
                for (int i = 0; i < Ho; ++i) {
                  const int ih = i + u - pad;
                  if (ih < 0 || ih >= H) continue;
                  const T* __restrict xr = xc + int64_t{ih} * W + (v - pad);
                  const T* __restrict dyr = dyo + int64_t{i} * Wo;
                  for (int j = j0; j < j1; ++j) acc += xr[j] * dyr[j];
                }
              } else {
                const int j0 = std::max(0, ceil_div(pad - v, stride));
                const int j1 = std::min(Wo, ceil_div(W + pad - v, stride));
                for (int i = 0; i < Ho; ++i) {
                  const int ih = i * stride + u - pad;
                  if (ih < 0 || ih >= H) continue;
                  const T* __restrict xr = xc + int64_t{ih} * W;
                  const T* __restrict dyr = dyo + int64_t{i} * Wo;
                  for (int j = j0; j < j1; ++j)
                    acc += xr[j * stride + v - pad] * dyr[j];
                }
              }
              dwo[(int64_t{c} * kH + u) * kW + v] += acc;
            }
          }
        }
      }
      if (db) db[o] += dbacc;
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad, Tape<T>* tape) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.rank() != 4) fail("conv2d: input must be rank 4, got ", xs.str());
  if (ws.rank() != 4) fail("conv2d: kernel must be rank 4, got ", ws.str());
  if (b.shape().rank() != 1)
    fail("conv2d: bias must be rank 1, got ", b.shape().str());
  const int N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const int Cout = ws[0], kH = ws[2], kW = ws[3];
  if (ws[1] != Cin)
    fail("conv2d: kernel expects ", ws[1], " input channels, input has ", Cin);
  if (b.shape()[0] != Cout)
    fail("conv2d: bias has ", b.shape()[0], " entries for ", Cout, " filters");
  if (kH % 2 == 0 || kW % 2 == 0)
    fail("conv2d: kernel extents must be odd, got ", kH, "x", kW);
  if (stride < 1) fail("conv2d: stride must be >= 1, got ", stride);
  if (pad < 0) fail("conv2d: pad must be >= 0, got ", pad);
  const int hspan = H + 2 * pad - kH, wspan = W + 2 * pad - kW;
  if (hspan < 0 || wspan < 0 || hspan % stride || wspan % stride)
    fail("conv2d: non-integral output extent for input ", xs.str(),
         ", kernel ", ws.str(), ", stride ", stride, ", pad ", pad);
  const int Ho = hspan / stride + 1, Wo = wspan / stride + 1;

  Tensor<T> out = Tensor<T>::zeros(Shape{N, Cout, Ho, Wo});
  conv_forward_kernel(x.data().data(), w.data().data(), b.data().data(),
                      out.data().data(), N, Cin, H, W, Cout, kH, kW, stride,
                      pad, Ho, Wo);
  check_finite("conv2d", out);

  if (recording(tape, {&x, &w, &b})) {
    out.mark_tracked();
    tape->record([x = x, w = w, b = b, out, N, Cin, H, W, Cout, kH, kW,
                  stride, pad, Ho, Wo]() mutable {
      if (!out.grad_allocated()) return;
      const T* dy = out.grad().data();
      if (x.tracked())
        conv_backward_input_kernel(dy, w.data().data(), x.grad().data(), N,
                                   Cin, H, W, Cout, kH, kW, stride, pad, Ho,
                                   Wo);
      if (w.tracked() || b.tracked())
        conv_backward_weight_kernel(
            x.data().data(), dy, w.tracked() ? w.grad().data() : nullptr,
            b.tracked() ? b.grad().data() : nullptr, N, Cin, H, W, Cout, kH,
            kW, stride, pad, Ho, Wo);
    });
  }
  return out;
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b, Tape<T>* tape) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.rank() != 4) fail("depthwise_conv2d: input must be rank 4, got ", xs.str());
  if (ws.rank() != 4 || ws[1] != 1)
    fail("depthwise_conv2d: kernel must be [C,1,k,k], got ", ws.str());
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int k = ws[2];
  if (ws[0] != C)
    fail("depthwise_conv2d: kernel has ", ws[0], " channels, input has ", C);
  if (ws[3] != k) fail("depthwise_conv2d: kernel must be square, got ", ws.str());
  if (k % 2 == 0) fail("depthwise_conv2d: kernel extent must be odd, got ", k);
  if (b.shape().rank() != 1 || b.shape()[0] != C)
    fail("depthwise_conv2d: bias must be [", C, "], got ", b.shape().str());
  const int pad = k / 2;

  Tensor<T> out = Tensor<T>::zeros(xs);
  {
    const T* __restrict xp = x.data().data();
    const T* __restrict wp = w.data().data();
    const T* __restrict bp = b.data().data();
    T* __restrict yp = out.data().data();
    const int64_t per = int64_t{k} * k * H * W;
    parallel_for(int64_t{N} * C, grain_for(per), [=](int64_t lo, int64_t hi) {
      for (int64_t nc = lo; nc < hi; ++nc) {
        const int c = static_cast<int>(nc % C);
        const T* __restrict xc = xp + nc * H * W;
        const T* __restrict wc = wp + int64_t{c} * k * k;
        T* __restrict yc = yp + nc * H * W;
        const T bc = bp[c];
        for (int64_t i = 0; i < int64_t{H} * W; ++i) yc[i] = bc;
        for (int u = 0; u < k; ++u) {
          for (int v = 0; v < k; ++v) {
            const T wv = wc[u * k + v];
            const int j0 = std::max(0, pad - v), j1 = std::min(W, W + pad - v);
            for (int i = 0; i < H; ++i) {
              const int ih = i + u - pad;
              if (ih < 0 || ih >= H) continue;
              const T* __restrict xr = xc + int64_t{ih} * W + (v - pad);
              T* __restrict yr = yc + int64_t{i} * W;
              for (int j = j0; j < j1; ++j) yr[j] += wv * xr[j];
            }
          }
        }
      }
    });
  }
  check_finite("depthwise_conv2d", out);

  if (recording(tape, {&x, &w, &b})) {
    out.mark_tracked();
    tape->record([x = x, w = w, b = b, out, N, C, H, W, k, pad]() mutable {
      if (!out.grad_allocated()) return;
      const T* __restrict dy = out.grad().data();
      if (x.tracked()) {
        T* __restrict dx = x.grad().data();
        const T* __restrict wp = w.data().data();
        parallel_for(int64_t{N} * C, grain_for(int64_t{k} * k * H * W),
                     [=](int64_t lo, int64_t hi) {
          for (int64_t nc = lo; nc < hi; ++nc) {
            const int c = static_cast<int>(nc % C);
            const T* __restrict wc = wp + int64_t{c} * k * k;
            const T* __restrict dyc = dy + nc * H * W;
            T* __restrict dxc = dx + nc * H * W;
            for (int u = 0; u < k; ++u) {
              for (int v = 0; v < k; ++v) {
                const T wv = wc[u * k + v];
                const int j0 = std::max(0, pad - v), j1 = std::min(W, W + pad - v);
                for (int i = 0; i < H; ++i) {
                  const int ih = i + u - pad;
                  if (ih < 0 || ih >= H) continue;
                  T* __restrict dxr = dxc + int64_t{ih} * W + (v - pad);
                  const T* __restrict dyr = dyc + int64_t{i} * W;
                  for (int j = j0; j < j1; ++j) dxr[j] += wv * dyr[j];
                }
              }
            }
          }
        });
      }
      if (w.tracked() || b.tracked()) {
        T* __restrict dw = w.tracked() ? w.grad().data() : nullptr;
        T* __restrict db = b.tracked() ? b.grad().data() : nullptr;
        const T* __restrict xp = x.data().data();
        parallel_for(C, grain_for(int64_t{N} * k * k * H * W),
                     [=](int64_t lo, int64_t hi) {
          for (int64_t c = lo; c < hi; ++c) {
            T dbacc = 0;
            for (int n = 0; n < N; ++n) {
              const int64_t nc = int64_t{n} * C + c;
              const T* __restrict xc = xp + nc * H * W;
              const T* __restrict dyc = dy + nc * H * W;
              if (db)
                for (int64_t i = 0; i < int64_t{H} * W; ++i) dbacc += dyc[i];
              if (!dw) continue;
              for (int u = 0; u < k; ++u) {
                for (int v = 0; v < k; ++v) {
                  T acc = 0;
                  const int j0 = std::max(0, pad - v), j1 = std::min(W, W + pad - v);
                  for (int i = 0; i < H; ++i) {
                    const int ih = i + u - pad;
                    if (ih < 0 || ih >= H) continue;
                    const T* __restrict xr = xc + int64_t{ih} * W + (v - pad);
                    const T* __restrict dyr = dyc + int64_t{i} * W;
                    for (int j = j0; j < j1; ++j) acc += xr[j] * dyr[j];
                  }
                  dw[(int64_t{c} * k + u) * k + v] += acc;
                }
              }
            }
            if (db) db[c] += dbacc;
          }
        });
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& w,
                         const Tensor<T>& b, Tape<T>* tape) {
  const Shape& ws = w.shape();
  if (ws.rank() != 4 || ws[2] != 1 || ws[3] != 1)
    fail("pointwise_conv: kernel must be [Cout,Cin,1,1], got ", ws.str());
  return conv2d(x, w, b, 1, 0, tape);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xi = x.data();
  auto yo = out.data();
  for (int64_t i = 0; i < x.numel(); ++i) yo[i] = xi[i] > T(0) ? xi[i] : T(0);
  if (recording(tape, {&x})) {
    out.mark_tracked();
    tape->record([x = x, out]() mutable {
      if (!out.grad_allocated() || !x.tracked()) return;
      auto dy = out.grad();
      auto xi = x.data();
      auto dx = x.grad();
      for (size_t i = 0; i < dx.size(); ++i)
        if (xi[i] > T(0)) dx[i] += dy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x, Tape<T>* tape) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto xi = x.data();
  auto yo = out.data();
  for (int64_t i = 0; i < x.numel(); ++i) {
    const T v = xi[i];
    yo[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                      : std::exp(v) / (T(1) + std::exp(v));
  }
  check_finite("sigmoid", out);
  if (recording(tape, {&x})) {
    out.mark_tracked();
    tape->record([x = x, out]() mutable {
      if (!out.grad_allocated() || !x.tracked()) return;
      auto dy = out.grad();
      auto y = out.data();
      auto dx = x.grad();
      for (size_t i = 0; i < dx.size(); ++i)
        dx[i] += dy[i] * y[i] * (T(1) - y[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps, Tape<T>* tape) {
  const Shape& xs = x.shape();
  if (xs.rank() != 4 || xs[2] != 1 || xs[3] != 1)
    fail("layer_norm: expects [N,C,1,1], got ", xs.str());
  const int N = xs[0], C = xs[1];
  if (gamma.shape().rank() != 1 || gamma.shape()[0] != C)
    fail("layer_norm: gamma must be [", C, "], got ", gamma.shape().str());
  if (beta.shape().rank() != 1 || beta.shape()[0] != C)
    fail("layer_norm: beta must be [", C, "], got ", beta.shape().str());

  Tensor<T> out = Tensor<T>::zeros(xs);
  auto xi = x.data();
  auto g = gamma.data();
  auto be = beta.data();
  auto yo = out.data();
  for (int n = 0; n < N; ++n) {
    const T* xn = xi.data() + int64_t{n} * C;
    T* yn = yo.data() + int64_t{n} * C;
    T mu = 0;
    for (int c = 0; c < C; ++c) mu += xn[c];
    mu /= T(C);
    T var = 0;
    for (int c = 0; c < C; ++c) var += (xn[c] - mu) * (xn[c] - mu);
    var /= T(C);
    const T inv = T(1) / std::sqrt(var + eps);
    for (int c = 0; c < C; ++c) yn[c] = g[c] * (xn[c] - mu) * inv + be[c];
  }
  check_finite("layer_norm", out);

  if (recording(tape, {&x, &gamma, &beta})) {
    out.mark_tracked();
    tape->record([x = x, gamma = gamma, beta = beta, eps, out, N, C]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      auto xi = x.data();
      auto g = gamma.data();
      std::vector<T> xhat(static_cast<size_t>(C));
      for (int n = 0; n < N; ++n) {
        const T* xn = xi.data() + int64_t{n} * C;
        const T* dyn = dy.data() + int64_t{n} * C;
        T mu = 0;
        for (int c = 0; c < C; ++c) mu += xn[c];
        mu /= T(C);
        T var = 0;
        for (int c = 0; c < C; ++c) var += (xn[c] - mu) * (xn[c] - mu);
        var /= T(C);
        const T inv = T(1) / std::sqrt(var + eps);
        for (int c = 0; c < C; ++c) xhat[c] = (xn[c] - mu) * inv;
        if (x.tracked()) {
          T s1 = 0, s2 = 0;
          for (int c = 0; c < C; ++c) {
            s1 += dyn[c] * g[c];
            s2 += dyn[c] * g[c] * xhat[c];
          }
          auto dx = x.grad();
          T* dxn = dx.data() + int64_t{n} * C;
          for (int c = 0; c < C; ++c)
            dxn[c] += inv * (dyn[c] * g[c] - s1 / T(C) - xhat[c] * s2 / T(C));
        }
        if (gamma.tracked()) {
          auto dg = gamma.grad();
          for (int c = 0; c < C; ++c) dg[c] += dyn[c] * xhat[c];
        }
        if (beta.tracked()) {
          auto db = beta.grad();
          for (int c = 0; c < C; ++c) db[c] += dyn[c];
        }
      }
    });
  }
  return out;
}

namespace {

// forward=true copies grouped channels into the upscaled grid; forward=false
// is the inverse gather. `accumulate` is used on gradient paths.
template <typename T, bool Accumulate>
void shuffle_move(const T* __restrict src, T* __restrict dst, int N, int C,
                  int H, int W, int s, bool to_space) {
  // to_space: src [N,C*s*s,H,W]  ->  dst [N,C,sH,sW]
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int a = 0; a < s; ++a) {
        for (int bq = 0; bq < s; ++bq) {
          const int64_t plane = ((int64_t{n} * C * s * s) + (int64_t{c} * s * s + a * s + bq)) * H * W;
          const int64_t big = (int64_t{n} * C + c) * (int64_t{H} * s) * (W * s);
          for (int i = 0; i < H; ++i) {
            const T* sp;
            T* dp;
            int64_t bigrow = big + (int64_t{s} * i + a) * (W * s) + bq;
            if (to_space) {
              sp = src + plane + int64_t{i} * W;
              dp = dst + bigrow;
              for (int j = 0; j < W; ++j) {
                if constexpr (Accumulate)
                  dp[int64_t{j} * s] += sp[j];
                else
                  dp[int64_t{j} * s] = sp[j];
              }
            } else {
              sp = src + bigrow;
              dp = dst + plane + int64_t{i} * W;
              for (int j = 0; j < W; ++j) {
                if constexpr (Accumulate)
                  dp[j] += sp[int64_t{j} * s];
                else
                  dp[j] = sp[int64_t{j} * s];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int s, Tape<T>* tape) {
  const Shape& xs = x.shape();
  if (xs.rank() != 4) fail("pixel_shuffle: input must be rank 4, got ", xs.str());
  if (s < 1) fail("pixel_shuffle: scale must be >= 1, got ", s);
  if (xs[1] % (s * s))
    fail("pixel_shuffle: ", xs[1], " channels not divisible by ", s * s);
  const int N = xs[0], C = xs[1] / (s * s), H = xs[2], W = xs[3];
  Tensor<T> out = Tensor<T>::zeros(Shape{N, C, H * s, W * s});
  shuffle_move<T, false>(x.data().data(), out.data().data(), N, C, H, W, s, true);
  if (recording(tape, {&x})) {
    out.mark_tracked();
    tape->record([x = x, out, N, C, H, W, s]() mutable {
      if (!out.grad_allocated() || !x.tracked()) return;
      shuffle_move<T, true>(out.grad().data(), x.grad().data(), N, C, H, W, s,
                            false);
    });
  }
  return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int s, Tape<T>* tape) {
  const Shape& xs = x.shape();
  if (xs.rank() != 4) fail("pixel_unshuffle: input must be rank 4, got ", xs.str());
  if (s < 1) fail("pixel_unshuffle: scale must be >= 1, got ", s);
  if (xs[2] % s || xs[3] % s)
    fail("pixel_unshuffle: spatial extents of ", xs.str(),
         " not divisible by ", s);
  const int N = xs[0], C = xs[1], H = xs[2] / s, W = xs[3] / s;
  Tensor<T> out = Tensor<T>::zeros(Shape{N, C * s * s, H, W});
  shuffle_move<T, false>(x.data().data(), out.data().data(), N, C, H, W, s, false);
  if (recording(tape, {&x})) {
    out.mark_tracked();
    tape->record([x = x, out, N, C, H, W, s]() mutable {
      if (!out.grad_allocated() || !x.tracked()) return;
      shuffle_move<T, true>(out.grad().data(), x.grad().data(), N, C, H, W, s,
                            true);
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs, Tape<T>* tape) {
  if (xs.empty()) fail("concat_channels: no inputs");
  const Shape& s0 = xs[0].shape();
  if (s0.rank() != 4) fail("concat_channels: inputs must be rank 4, got ", s0.str());
  const int N = s0[0], H = s0[2], W = s0[3];
  int ctot = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    if (s.rank() != 4 || s[0] != N || s[2] != H || s[3] != W)
      fail("concat_channels: mismatched shape ", s.str(), " vs ", s0.str());
    ctot += s[1];
  }
  Tensor<T> out = Tensor<T>::zeros(Shape{N, ctot, H, W});
  T* op = out.data().data();
  const int64_t hw = int64_t{H} * W;
  int coff = 0;
  for (const auto& t : xs) {
    const int ck = t.shape()[1];
    const T* ip = t.data().data();
    for (int n = 0; n < N; ++n)
      std::memcpy(op + (int64_t{n} * ctot + coff) * hw,
                  ip + int64_t{n} * ck * hw, sizeof(T) * ck * hw);
    coff += ck;
  }

  bool track = false;
  if (tape)
    for (const auto& t : xs)
      if (t.tracked()) track = true;
  if (track) {
    out.mark_tracked();
    std::vector<Tensor<T>> ins = xs;
    tape->record([ins, out, N, ctot, hw]() mutable {
      if (!out.grad_allocated()) return;
      const T* dy = out.grad().data();
      int coff = 0;
      for (auto& t : ins) {
        const int ck = t.shape()[1];
        if (t.tracked()) {
          T* dx = t.grad().data();
          for (int n = 0; n < N; ++n) {
            const T* src = dy + (int64_t{n} * ctot + coff) * hw;
            T* dst = dx + int64_t{n} * ck * hw;
            for (int64_t i = 0; i < ck * hw; ++i) dst[i] += src[i];
          }
        }
        coff += ck;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_positions(const Tensor<T>& a, Tape<T>* tape) {
  const Shape& as = a.shape();
  if (as.rank() != 4 || as[1] != 1)
    fail("softmax_positions: expects [N,1,H,W], got ", as.str());
  const int N = as[0];
  const int64_t hw = int64_t{as[2]} * as[3];
  Tensor<T> out = Tensor<T>::zeros(as);
  const T* ap = a.data().data();
  T* yp = out.data().data();
  for (int n = 0; n < N; ++n) {
    const T* an = ap + n * hw;
    T* yn = yp + n * hw;
    T m = an[0];
    for (int64_t i = 1; i < hw; ++i) m = std::max(m, an[i]);
    T z = 0;
    for (int64_t i = 0; i < hw; ++i) {
      yn[i] = std::exp(an[i] - m);
      z += yn[i];
    }
    for (int64_t i = 0; i < hw; ++i) yn[i] /= z;
  }
  check_finite("softmax_positions", out);
  if (recording(tape, {&a})) {
    out.mark_tracked();
    tape->record([a = a, out, N, hw]() mutable {
      if (!out.grad_allocated() || !a.tracked()) return;
      const T* dy = out.grad().data();
      const T* y = out.data().data();
      T* dx = a.grad().data();
      for (int n = 0; n < N; ++n) {
        const T* dyn = dy + n * hw;
        const T* yn = y + n * hw;
        T* dxn = dx + n * hw;
        T dot = 0;
        for (int64_t i = 0; i < hw; ++i) dot += dyn[i] * yn[i];
        for (int64_t i = 0; i < hw; ++i) dxn[i] += yn[i] * (dyn[i] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> weighted_spatial_pool(const Tensor<T>& x, const Tensor<T>& w,
                                Tape<T>* tape) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.rank() != 4) fail("weighted_spatial_pool: input must be rank 4, got ", xs.str());
  if (ws.rank() != 4 || ws[1] != 1 || ws[0] != xs[0] || ws[2] != xs[2] ||
      ws[3] != xs[3])
    fail("weighted_spatial_pool: weights must be [N,1,H,W] matching ", xs.str(),
         ", got ", ws.str());
  const int N = xs[0], C = xs[1];
  const int64_t hw = int64_t{xs[2]} * xs[3];
  Tensor<T> out = Tensor<T>::zeros(Shape{N, C, 1, 1});
  const T* xp = x.data().data();
  const T* wp = w.data().data();
  T* op = out.data().data();
  for (int n = 0; n < N; ++n) {
    const T* wn = wp + n * hw;
    for (int c = 0; c < C; ++c) {
      const T* xc = xp + (int64_t{n} * C + c) * hw;
      T acc = 0;
      for (int64_t i = 0; i < hw; ++i) acc += wn[i] * xc[i];
      op[int64_t{n} * C + c] = acc;
    }
  }
  if (recording(tape, {&x, &w})) {
    out.mark_tracked();
    tape->record([x = x, w = w, out, N, C, hw]() mutable {
      if (!out.grad_allocated()) return;
      const T* dy = out.grad().data();
      const T* wp = w.data().data();
      const T* xp = x.data().data();
      if (x.tracked()) {
        T* dx = x.grad().data();
        for (int n = 0; n < N; ++n) {
          const T* wn = wp + n * hw;
          for (int c = 0; c < C; ++c) {
            const T d = dy[int64_t{n} * C + c];
            T* dxc = dx + (int64_t{n} * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) dxc[i] += d * wn[i];
          }
        }
      }
      if (w.tracked()) {
        T* dw = w.grad().data();
        for (int n = 0; n < N; ++n) {
          T* dwn = dw + n * hw;
          for (int c = 0; c < C; ++c) {
            const T d = dy[int64_t{n} * C + c];
            const T* xc = xp + (int64_t{n} * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) dwn[i] += d * xc[i];
          }
        }
      }
    });
  }
  return out;
}

namespace {

// true when g is [N,C,1,1] against x [N,C,H,W] with H*W > 1
template <typename T>
bool spatial_broadcast(const Tensor<T>& x, const Tensor<T>& g,
                       const char* op) {
  if (x.shape() == g.shape()) return false;
  const Shape& xs = x.shape();
  const Shape& gs = g.shape();
  if (xs.rank() == 4 && gs.rank() == 4 && gs[0] == xs[0] && gs[1] == xs[1] &&
      gs[2] == 1 && gs[3] == 1)
    return true;
  fail(op, ": shape mismatch ", xs.str(), " vs ", gs.str(),
       " (second argument may broadcast only as [N,C,1,1])");
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& x, const Tensor<T>& y, Tape<T>* tape) {
  const bool bc = spatial_broadcast(x, y, "add");
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xp = x.data().data();
  const T* yp = y.data().data();
  T* op = out.data().data();
  if (!bc) {
    for (int64_t i = 0; i < x.numel(); ++i) op[i] = xp[i] + yp[i];
  } else {
    const int N = x.shape()[0], C = x.shape()[1];
    const int64_t hw = int64_t{x.shape()[2]} * x.shape()[3];
    for (int64_t nc = 0; nc < int64_t{N} * C; ++nc) {
      const T v = yp[nc];
      T* o = op + nc * hw;
      const T* xr = xp + nc * hw;
      for (int64_t i = 0; i < hw; ++i) o[i] = xr[i] + v;
    }
  }
  if (recording(tape, {&x, &y})) {
    out.mark_tracked();
    tape->record([x = x, y = y, out, bc]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      if (x.tracked()) {
        auto dx = x.grad();
        for (size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
      }
      if (y.tracked()) {
        auto dg = y.grad();
        if (!bc) {
          for (size_t i = 0; i < dg.size(); ++i) dg[i] += dy[i];
        } else {
          const int N = x.shape()[0], C = x.shape()[1];
          const int64_t hw = int64_t{x.shape()[2]} * x.shape()[3];
          for (int64_t nc = 0; nc < int64_t{N} * C; ++nc) {
            T acc = 0;
            const T* d = dy.data() + nc * hw;
            for (int64_t i = 0; i < hw; ++i) acc += d[i];
            dg[nc] += acc;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul_broadcast(const Tensor<T>& x, const Tensor<T>& g, Tape<T>* tape) {
  const bool bc = spatial_broadcast(x, g, "mul_broadcast");
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xp = x.data().data();
  const T* gp = g.data().data();
  T* op = out.data().data();
  if (!bc) {
    for (int64_t i = 0; i < x.numel(); ++i) op[i] = xp[i] * gp[i];
  } else {
    const int N = x.shape()[0], C = x.shape()[1];
    const int64_t hw = int64_t{x.shape()[2]} * x.shape()[3];
    for (int64_t nc = 0; nc < int64_t{N} * C; ++nc) {
      const T v = gp[nc];
      T* o = op + nc * hw;
      const T* xr = xp + nc * hw;
      for (int64_t i = 0; i < hw; ++i) o[i] = xr[i] * v;
    }
  }
  if (recording(tape, {&x, &g})) {
    out.mark_tracked();
    tape->record([x = x, g = g, out, bc]() mutable {
      if (!out.grad_allocated()) return;
      auto dy = out.grad();
      const T* xp = x.data().data();
      const T* gp = g.data().data();
      if (!bc) {
        if (x.tracked()) {
          auto dx = x.grad();
          for (size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * gp[i];
        }
        if (g.tracked()) {
          auto dg = g.grad();
          for (size_t i = 0; i < dg.size(); ++i) dg[i] += dy[i] * xp[i];
        }
      } else {
        const int N = x.shape()[0], C = x.shape()[1];
        const int64_t hw = int64_t{x.shape()[2]} * x.shape()[3];
        if (x.tracked()) {
          auto dx = x.grad();
          for (int64_t nc = 0; nc < int64_t{N} * C; ++nc) {
            const T v = gp[nc];
            T* d = dx.data() + nc * hw;
            const T* s = dy.data() + nc * hw;
            for (int64_t i = 0; i < hw; ++i) d[i] += s[i] * v;
          }
        }
        if (g.tracked()) {
          auto dg = g.grad();
          for (int64_t nc = 0; nc < int64_t{N} * C; ++nc) {
            T acc = 0;
            const T* d = dy.data() + nc * hw;
            const T* xr = xp + nc * hw;
            for (int64_t i = 0; i < hw; ++i) acc += d[i] * xr[i];
            dg[nc] += acc;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target,
                  Tape<T>* tape) {
  if (pred.shape() != target.shape())
    fail("l1_loss: shape mismatch ", pred.shape().str(), " vs ",
         target.shape().str());
  const int64_t n = pred.numel();
  const T* p = pred.data().data();
  const T* t = target.data().data();
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += std::abs(p[i] - t[i]);
  Tensor<T> out = Tensor<T>::scalar(acc / T(n));
  if (recording(tape, {&pred, &target})) {
    out.mark_tracked();
    tape->record([pred = pred, target = target, out, n]() mutable {
      if (!out.grad_allocated()) return;
      const T d = out.grad()[0] / T(n);
      const T* p = pred.data().data();
      const T* t = target.data().data();
      if (pred.tracked()) {
        auto dp = pred.grad();
        for (int64_t i = 0; i < n; ++i) {
          const T diff = p[i] - t[i];
          dp[i] += diff > T(0) ? d : (diff < T(0) ? -d : T(0));
        }
      }
      if (target.tracked()) {
        auto dt = target.grad();
        for (int64_t i = 0; i < n; ++i) {
          const T diff = p[i] - t[i];
          dt[i] -= diff > T(0) ? d : (diff < T(0) ? -d : T(0));
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, Tape<T>* tape) {
  const T* p = x.data().data();
  T acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += p[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (recording(tape, {&x})) {
    out.mark_tracked();
    tape->record([x = x, out]() mutable {
      if (!out.grad_allocated() || !x.tracked()) return;
      const T d = out.grad()[0];
      auto dx = x.grad();
      for (size_t i = 0; i < dx.size(); ++i) dx[i] += d;
    });
  }
  return out;
}

#define RNAN_INSTANTIATE_OPS(T)                                               \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&,              \
                            const Tensor<T>&, int, int, Tape<T>*);           \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&,    \
                                      const Tensor<T>&, Tape<T>*);           \
  template Tensor<T> pointwise_conv(const Tensor<T>&, const Tensor<T>&,      \
                                    const Tensor<T>&, Tape<T>*);             \
  template Tensor<T> relu(const Tensor<T>&, Tape<T>*);                       \
  template Tensor<T> sigmoid(const Tensor<T>&, Tape<T>*);                    \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&,          \
                                const Tensor<T>&, T, Tape<T>*);              \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, int, Tape<T>*);         \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, int, Tape<T>*);       \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&,          \
                                     Tape<T>*);                              \
  template Tensor<T> softmax_positions(const Tensor<T>&, Tape<T>*);          \
  template Tensor<T> weighted_spatial_pool(const Tensor<T>&,                 \
                                           const Tensor<T>&, Tape<T>*);      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&, Tape<T>*);      \
  template Tensor<T> mul_broadcast(const Tensor<T>&, const Tensor<T>&,       \
                                   Tape<T>*);                                \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&, Tape<T>*);  \
  template Tensor<T> sum(const Tensor<T>&, Tape<T>*)

RNAN_INSTANTIATE_OPS(float);
RNAN_INSTANTIATE_OPS(double);
#undef RNAN_INSTANTIATE_OPS

}  // namespace rnan
