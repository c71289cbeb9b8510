#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rnan {

// Dense row-major shape, rank 0..4. Rank-4 tensors follow the
// [batch, channels, height, width] convention.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int> dims);

  static Shape scalar() { return Shape(); }

  int rank() const { return rank_; }
  int operator[](int i) const;
  int64_t numel() const;
  bool operator==(const Shape& other) const;
  bool operator!=(const Shape& other) const { return !(*this == other); }
  std::string str() const;  // e.g. "[1,3,5,5]"

 private:
  std::array<int, 4> dims_{1, 1, 1, 1};
  int rank_ = 0;
};

// Tensor of float or double with an optional same-shape gradient buffer.
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets recorded backward rules reach the tensors they need. clone() makes an
// independent deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value);
  static Tensor from(const Shape& shape, std::vector<T> values);
  static Tensor scalar(T value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;

  std::span<T> data();
  std::span<const T> data() const;

  // Rank-4 element access; used by tests and light-duty code, kernels index
  // raw spans directly.
  T& at(int n, int c, int h, int w);
  T at(int n, int c, int h, int w) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  // Gradient buffer, allocated zero-filled on first access. A leaf that never
  // appears in a backward pass therefore reads as all-zero gradient.
  std::span<T> grad();
  std::span<const T> grad() const;
  bool grad_allocated() const;
  void zero_grad();

  // True when gradients must flow into this tensor: either a leaf with
  // requires_grad or an intermediate produced under a tape.
  bool tracked() const;
  void mark_tracked();

  Tensor clone() const;

  template <typename U>
  Tensor<U> cast() const {
    if (!defined()) return {};
    std::vector<U> out(static_cast<size_t>(numel()));
    auto src = data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    Tensor<U> t = Tensor<U>::from(shape(), std::move(out));
    t.set_requires_grad(requires_grad());
    return t;
  }

  // Stable identity of the underlying storage.
  const void* node_id() const { return node_.get(); }

 private:
  struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first touched
    bool requires_grad = false;
    bool on_tape = false;
  };
  std::shared_ptr<Node> node_;
};

// Reverse-mode tape. Ops append their backward rules in forward execution
// order (so inputs always precede consumers); backward() replays the rules
// exactly once in reverse and then frees them. One tape per forward pass.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_rule);
  size_t size() const { return rules_.size(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tracked
  // tensor reachable from loss. loss must be a scalar. Consumes the tape.
  void backward(Tensor<T>& loss);

  void clear();

 private:
  std::vector<std::function<void()>> rules_;
  bool consumed_ = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace rnan
