#include "rnan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace rnan {

template <typename T>
double grad_check(
    const std::function<Tensor<T>(Tape<T>&, std::vector<Tensor<T>>&)>& fn,
    std::vector<Tensor<T>> inputs, double eps) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape<T> tape;
  Tensor<T> loss = fn(tape, inputs);
  tape.backward(loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs)
    analytic.emplace_back(t.grad().begin(), t.grad().end());

  auto eval = [&](std::vector<Tensor<T>>& ins) {
    Tape<T> scratch;
    Tensor<T> l = fn(scratch, ins);
    scratch.clear();
    return static_cast<double>(l.data()[0]);
  };

  double max_rel = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].data();
    for (int64_t i = 0; i < inputs[k].numel(); ++i) {
      const T orig = data[i];
      data[i] = orig + static_cast<T>(eps);
      const double fp = eval(inputs);
      data[i] = orig - static_cast<T>(eps);
      const double fm = eval(inputs);
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = static_cast<double>(analytic[k][static_cast<size_t>(i)]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

template double grad_check(
    const std::function<Tensor<float>(Tape<float>&, std::vector<Tensor<float>>&)>&,
    std::vector<Tensor<float>>, double);
template double grad_check(
    const std::function<Tensor<double>(Tape<double>&, std::vector<Tensor<double>>&)>&,
    std::vector<Tensor<double>>, double);

}  // namespace rnan
