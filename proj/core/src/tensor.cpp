#include "rnan/tensor.hpp"

#include <utility>

#include "internal.hpp"

namespace rnan {

Shape::Shape(std::initializer_list<int> dims) {
  if (dims.size() > 4) detail::fail("Shape: rank ", dims.size(), " exceeds 4");
  for (int d : dims) {
    if (d <= 0) detail::fail("Shape: non-positive extent ", d);
    dims_[rank_++] = d;
  }
}

int Shape::operator[](int i) const {
  if (i < 0 || i >= rank_) detail::fail("Shape: axis ", i, " out of range for rank ", rank_);
  return dims_[i];
}

int64_t Shape::numel() const {
  int64_t n = 1;
  for (int i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

bool Shape::operator==(const Shape& other) const {
  if (rank_ != other.rank_) return false;
  for (int i = 0; i < rank_; ++i)
    if (dims_[i] != other.dims_[i]) return false;
  return true;
}

std::string Shape::str() const {
  std::string s = "[";
  for (int i = 0; i < rank_; ++i) {
    if (i) s += ",";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = shape;
  t.node_->data.assign(static_cast<size_t>(shape.numel()), T(0));
  t.node_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
  Tensor t = zeros(shape);
  for (T& v : t.node_->data) v = value;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::vector<T> values) {
  if (static_cast<int64_t>(values.size()) != shape.numel())
    detail::fail("Tensor::from: ", values.size(), " values for shape ", shape.str());
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = shape;
  t.node_->data = std::move(values);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from(Shape::scalar(), {value});
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!node_) detail::fail("Tensor: undefined");
  return node_->shape;
}

template <typename T>
int64_t Tensor<T>::numel() const {
  return shape().numel();
}

template <typename T>
std::span<T> Tensor<T>::data() {
  if (!node_) detail::fail("Tensor: undefined");
  return node_->data;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  if (!node_) detail::fail("Tensor: undefined");
  return node_->data;
}

template <typename T>
T& Tensor<T>::at(int n, int c, int h, int w) {
  const Shape& s = shape();
  if (s.rank() != 4) detail::fail("Tensor::at: rank-4 accessor on ", s.str());
  return node_->data[((static_cast<int64_t>(n) * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename T>
T Tensor<T>::at(int n, int c, int h, int w) const {
  return const_cast<Tensor*>(this)->at(n, c, h, w);
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  if (!node_) detail::fail("Tensor: undefined");
  node_->requires_grad = value;
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (!node_) detail::fail("Tensor: undefined");
  if (node_->grad.empty())
    node_->grad.assign(static_cast<size_t>(node_->shape.numel()), T(0));
  return node_->grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return const_cast<Tensor*>(this)->grad();
}

template <typename T>
bool Tensor<T>::grad_allocated() const {
  return node_ && !node_->grad.empty();
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_ && !node_->grad.empty())
    node_->grad.assign(node_->grad.size(), T(0));
}

template <typename T>
bool Tensor<T>::tracked() const {
  return node_ && (node_->requires_grad || node_->on_tape);
}

template <typename T>
void Tensor<T>::mark_tracked() {
  if (!node_) detail::fail("Tensor: undefined");
  node_->on_tape = true;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  if (!node_) return {};
  Tensor t;
  t.node_ = std::make_shared<Node>(*node_);
  t.node_->on_tape = false;
  return t;
}

template <typename T>
void Tape<T>::record(std::function<void()> backward_rule) {
  if (consumed_) detail::fail("Tape: recording on a consumed tape");
  rules_.push_back(std::move(backward_rule));
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss) {
  if (consumed_) detail::fail("Tape: backward called twice");
  if (loss.shape().numel() != 1)
    detail::fail("Tape::backward: loss must be scalar, got ", loss.shape().str());
  consumed_ = true;
  loss.grad()[0] = T(1);
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
  rules_.clear();
  rules_.shrink_to_fit();
}

template <typename T>
void Tape<T>::clear() {
  rules_.clear();
  consumed_ = false;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace rnan
