#include "rnan/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rnan/gradcheck.hpp"
#include "rnan/model.hpp"
#include "rnan/ops.hpp"

namespace rnan {

namespace {

using D = double;
using Tn = Tensor<double>;
using Tp = Tape<double>;

double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// uniform in [-1,1]
double sym(std::mt19937_64& rng) { return 2.0 * unit(rng) - 1.0; }

// uniform in +/-[margin, 1]: keeps kinked ops away from their kink
double away(std::mt19937_64& rng, double margin) {
  const double v = margin + (1.0 - margin) * unit(rng);
  return rng() & 1 ? v : -v;
}

Tn rand_tensor(const Shape& s, std::mt19937_64& rng) {
  std::vector<double> v(static_cast<size_t>(s.numel()));
  for (auto& x : v) x = sym(rng);
  return Tn::from(s, std::move(v));
}

Tn rand_tensor_away(const Shape& s, std::mt19937_64& rng, double margin) {
  std::vector<double> v(static_cast<size_t>(s.numel()));
  for (auto& x : v) x = away(rng, margin);
  return Tn::from(s, std::move(v));
}

int rnd(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

// projects `out` to a scalar against fixed coefficients so that permutation
// and indexing mistakes cannot cancel
Tn project(Tp& tape, const Tn& out, const Tn& coeff) {
  return sum(mul_broadcast(out, coeff, &tape), &tape);
}

struct Case {
  std::function<Tn(Tp&, std::vector<Tn>&)> fn;
  std::vector<Tn> inputs;
};

using CaseGen = std::function<Case(std::mt19937_64&)>;

Case conv_case(std::mt19937_64& rng, bool strided) {
  const int n = rnd(rng, 1, 2), cin = rnd(rng, 1, 3), cout = rnd(rng, 1, 3);
  const int k = rng() & 1 ? 3 : 1;
  int stride = 1, pad = rng() & 1 ? k / 2 : 0;
  int h = rnd(rng, k, 6), w = rnd(rng, k, 6);
  if (strided) {
    stride = 2;
    pad = k / 2;
    // keep the span divisible by the stride
    while ((h + 2 * pad - k) % 2) ++h;
    while ((w + 2 * pad - k) % 2) ++w;
  }
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  Case c;
  c.inputs = {rand_tensor({n, cin, h, w}, rng),
              rand_tensor({cout, cin, k, k}, rng),
              rand_tensor({cout}, rng)};
  Tn coeff = rand_tensor({n, cout, ho, wo}, rng);
  c.fn = [coeff, stride, pad](Tp& tape, std::vector<Tn>& in) {
    return project(tape, conv2d(in[0], in[1], in[2], stride, pad, &tape), coeff);
  };
  return c;
}

}  // namespace

std::vector<OpGradResult> run_op_grad_suite(uint64_t seed, int cases,
                                            double eps) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::string, CaseGen>> gens;

  gens.emplace_back("conv2d", [](std::mt19937_64& r) { return conv_case(r, false); });
  gens.emplace_back("conv2d_strided", [](std::mt19937_64& r) { return conv_case(r, true); });

  gens.emplace_back("depthwise_conv2d", [](std::mt19937_64& r) {
    const int n = rnd(r, 1, 2), c = rnd(r, 1, 4);
    const int k = r() & 1 ? 3 : 1;
    const int h = rnd(r, 1, 6), w = rnd(r, 1, 6);
    Case cs;
    cs.inputs = {rand_tensor({n, c, h, w}, r), rand_tensor({c, 1, k, k}, r),
                 rand_tensor({c}, r)};
    Tn coeff = rand_tensor({n, c, h, w}, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, depthwise_conv2d(in[0], in[1], in[2], &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("pointwise_conv", [](std::mt19937_64& r) {
    const int n = rnd(r, 1, 2), cin = rnd(r, 1, 4), cout = rnd(r, 1, 4);
    const int h = rnd(r, 1, 6), w = rnd(r, 1, 6);
    Case cs;
    cs.inputs = {rand_tensor({n, cin, h, w}, r),
                 rand_tensor({cout, cin, 1, 1}, r), rand_tensor({cout}, r)};
    Tn coeff = rand_tensor({n, cout, h, w}, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, pointwise_conv(in[0], in[1], in[2], &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("relu", [](std::mt19937_64& r) {
    const Shape s{rnd(r, 1, 2), rnd(r, 1, 4), rnd(r, 1, 6), rnd(r, 1, 6)};
    Case cs;
    cs.inputs = {rand_tensor_away(s, r, 1e-2)};
    Tn coeff = rand_tensor(s, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, relu(in[0], &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("sigmoid", [](std::mt19937_64& r) {
    const Shape s{rnd(r, 1, 2), rnd(r, 1, 4), rnd(r, 1, 6), rnd(r, 1, 6)};
    Case cs;
    cs.inputs = {rand_tensor(s, r)};
    Tn coeff = rand_tensor(s, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, sigmoid(in[0], &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("layer_norm", [](std::mt19937_64& r) {
    const int n = rnd(r, 1, 3), c = rnd(r, 2, 6);
    // alternate signs so the channel variance stays O(1); like the ReLU
    // margin, this keeps the 1e-3 perturbation inside the smooth regime
    std::vector<double> xv(static_cast<size_t>(n) * c);
    for (int i = 0; i < n * c; ++i)
      xv[static_cast<size_t>(i)] = (i % 2 ? -1.0 : 1.0) * (0.6 + 0.4 * unit(r));
    Case cs;
    cs.inputs = {Tn::from({n, c, 1, 1}, std::move(xv)), rand_tensor({c}, r),
                 rand_tensor({c}, r)};
    Tn coeff = rand_tensor({n, c, 1, 1}, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, layer_norm(in[0], in[1], in[2], 1e-5, &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("pixel_shuffle", [](std::mt19937_64& r) {
    const int s = r() & 1 ? 2 : 3;
    const int n = rnd(r, 1, 2), c = rnd(r, 1, 2);
    const int h = rnd(r, 1, 4), w = rnd(r, 1, 4);
    Case cs;
    cs.inputs = {rand_tensor({n, c * s * s, h, w}, r)};
    Tn coeff = rand_tensor({n, c, h * s, w * s}, r);
    cs.fn = [coeff, s](Tp& tape, std::vector<Tn>& in) {
      return project(tape, pixel_shuffle(in[0], s, &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("pixel_unshuffle", [](std::mt19937_64& r) {
    const int s = r() & 1 ? 2 : 3;
    const int n = rnd(r, 1, 2), c = rnd(r, 1, 2);
    const int h = rnd(r, 1, 2), w = rnd(r, 1, 2);
    Case cs;
    cs.inputs = {rand_tensor({n, c, h * s, w * s}, r)};
    Tn coeff = rand_tensor({n, c * s * s, h, w}, r);
    cs.fn = [coeff, s](Tp& tape, std::vector<Tn>& in) {
      return project(tape, pixel_unshuffle(in[0], s, &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("concat_channels", [](std::mt19937_64& r) {
    const int n = rnd(r, 1, 2), h = rnd(r, 1, 5), w = rnd(r, 1, 5);
    const int c1 = rnd(r, 1, 3), c2 = rnd(r, 1, 3), c3 = rnd(r, 1, 3);
    Case cs;
    cs.inputs = {rand_tensor({n, c1, h, w}, r), rand_tensor({n, c2, h, w}, r),
                 rand_tensor({n, c3, h, w}, r)};
    Tn coeff = rand_tensor({n, c1 + c2 + c3, h, w}, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, concat_channels(in, &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("softmax_positions", [](std::mt19937_64& r) {
    const int n = rnd(r, 1, 3), h = rnd(r, 1, 5), w = rnd(r, 1, 5);
    Case cs;
    cs.inputs = {rand_tensor({n, 1, h, w}, r)};
    Tn coeff = rand_tensor({n, 1, h, w}, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, softmax_positions(in[0], &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("weighted_spatial_pool", [](std::mt19937_64& r) {
    const int n = rnd(r, 1, 2), c = rnd(r, 1, 4);
    const int h = rnd(r, 1, 5), w = rnd(r, 1, 5);
    Case cs;
    cs.inputs = {rand_tensor({n, c, h, w}, r), rand_tensor({n, 1, h, w}, r)};
    Tn coeff = rand_tensor({n, c, 1, 1}, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, weighted_spatial_pool(in[0], in[1], &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("add", [](std::mt19937_64& r) {
    const Shape s{rnd(r, 1, 2), rnd(r, 1, 4), rnd(r, 1, 5), rnd(r, 1, 5)};
    Case cs;
    cs.inputs = {rand_tensor(s, r), rand_tensor(s, r)};
    Tn coeff = rand_tensor(s, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, add(in[0], in[1], &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("add_broadcast", [](std::mt19937_64& r) {
    const int n = rnd(r, 1, 2), c = rnd(r, 1, 4);
    const Shape s{n, c, rnd(r, 1, 5), rnd(r, 1, 5)};
    Case cs;
    cs.inputs = {rand_tensor(s, r), rand_tensor({n, c, 1, 1}, r)};
    Tn coeff = rand_tensor(s, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, add(in[0], in[1], &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("mul_broadcast", [](std::mt19937_64& r) {
    const Shape s{rnd(r, 1, 2), rnd(r, 1, 4), rnd(r, 1, 5), rnd(r, 1, 5)};
    Case cs;
    cs.inputs = {rand_tensor(s, r), rand_tensor(s, r)};
    Tn coeff = rand_tensor(s, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, mul_broadcast(in[0], in[1], &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("mul_broadcast_gate", [](std::mt19937_64& r) {
    const int n = rnd(r, 1, 2), c = rnd(r, 1, 4);
    const Shape s{n, c, rnd(r, 1, 5), rnd(r, 1, 5)};
    Case cs;
    cs.inputs = {rand_tensor(s, r), rand_tensor({n, c, 1, 1}, r)};
    Tn coeff = rand_tensor(s, r);
    cs.fn = [coeff](Tp& tape, std::vector<Tn>& in) {
      return project(tape, mul_broadcast(in[0], in[1], &tape), coeff);
    };
    return cs;
  });

  gens.emplace_back("l1_loss", [](std::mt19937_64& r) {
    const Shape s{rnd(r, 1, 2), rnd(r, 1, 4), rnd(r, 1, 5), rnd(r, 1, 5)};
    Tn pred = rand_tensor(s, r);
    Tn diff = rand_tensor_away(s, r, 1e-2);
    std::vector<double> tv(pred.data().begin(), pred.data().end());
    for (int64_t i = 0; i < pred.numel(); ++i)
      tv[static_cast<size_t>(i)] -= diff.data()[i];
    Case cs;
    cs.inputs = {pred, Tn::from(s, std::move(tv))};
    cs.fn = [](Tp& tape, std::vector<Tn>& in) {
      return l1_loss(in[0], in[1], &tape);
    };
    return cs;
  });

  gens.emplace_back("sum", [](std::mt19937_64& r) {
    const Shape s{rnd(r, 1, 2), rnd(r, 1, 4), rnd(r, 1, 5), rnd(r, 1, 5)};
    Case cs;
    cs.inputs = {rand_tensor(s, r)};
    cs.fn = [](Tp& tape, std::vector<Tn>& in) { return sum(in[0], &tape); };
    return cs;
  });

  std::vector<OpGradResult> results;
  for (auto& [name, gen] : gens) {
    OpGradResult res{name, 0.0};
    for (int i = 0; i < cases; ++i) {
      Case c = gen(rng);
      res.max_rel_err =
          std::max(res.max_rel_err, grad_check<double>(c.fn, c.inputs, eps));
    }
    results.push_back(res);
  }
  return results;
}

std::vector<ModelGradResult> run_model_grad_check(uint64_t seed, int coords,
                                                  double eps) {
  ModelConfig cfg;
  cfg.g = 1;
  cfg.b = 1;
  cfg.c = 4;
  cfg.scale = 2;
  cfg.n = 1;
  cfg.m = 1;
  cfg.r = 2;
  RnanWeights<double> w = init_params<double>(cfg, seed);

  std::mt19937_64 rng(seed ^ 0x5eedULL);
  const Shape in_shape{1, 3, 6, 6};
  Tn x = rand_tensor(in_shape, rng);
  // target in the output domain
  Tn target = rand_tensor({1, 3, 12, 12}, rng);

  auto loss_of = [&](Tape<double>* tape) {
    Tn pred = rnan_forward(x, w, tape);
    return l1_loss(pred, target, tape);
  };

  Tape<double> tape;
  Tn loss = loss_of(&tape);
  tape.backward(loss);

  auto params = w.parameters();
  std::vector<ModelGradResult> results;
  for (int i = 0; i < coords; ++i) {
    const size_t p = rng() % params.size();
    auto data = params[p].tensor.data();
    const int64_t j = static_cast<int64_t>(rng() % data.size());
    const double analytic = params[p].tensor.grad()[j];
    const double orig = data[j];
    data[j] = orig + eps;
    const double fp = loss_of(nullptr).data()[0];
    data[j] = orig - eps;
    const double fm = loss_of(nullptr).data()[0];
    data[j] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    results.push_back({params[p].name, j, std::abs(analytic - numeric) / denom});
  }
  return results;
}

}  // namespace rnan
