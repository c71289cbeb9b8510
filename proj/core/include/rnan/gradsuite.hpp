#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rnan {

struct OpGradResult {
  std::string op;
  double max_rel_err = 0.0;
};

// Central-difference check of every differentiable op over `cases` random
// small shapes (extents <= 6) in double precision. ReLU and L1 inputs are
// sampled away from their kinks. Deterministic for a given seed.
std::vector<OpGradResult> run_op_grad_suite(uint64_t seed, int cases = 5,
                                            double eps = 1e-3);

struct ModelGradResult {
  std::string param;
  int64_t index = 0;
  double rel_err = 0.0;
};

// End-to-end check on a tiny network (g=1, b=1, c=4, scale=2, r=2): tape
// gradients of `coords` randomly chosen parameter coordinates against central
// finite differences of the L1 loss, in double precision.
std::vector<ModelGradResult> run_model_grad_check(uint64_t seed,
                                                  int coords = 10,
                                                  double eps = 1e-3);

}  // namespace rnan
