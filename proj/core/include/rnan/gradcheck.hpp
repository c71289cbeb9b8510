#pragma once

#include <functional>
#include <vector>

#include "rnan/tensor.hpp"

namespace rnan {

// Central-difference check of tape gradients. fn maps (tape, inputs) to a
// scalar loss; every coordinate of every input is perturbed by +/-eps (the
// recomputation runs without a tape) and the finite-difference slope is
// compared against the recorded gradient. Returns the maximum relative error
// with denominator max(|analytic|, |numeric|, 1e-8). Meant to run with
// T = double.
template <typename T>
double grad_check(
    const std::function<Tensor<T>(Tape<T>&, std::vector<Tensor<T>>&)>& fn,
    std::vector<Tensor<T>> inputs, double eps);

}  // namespace rnan
