#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "aimdit/man.hpp"
#include "aimdit/numerics/ops.hpp"
#include "aimdit/numerics/random.hpp"
#include "aimdit/numerics/tensor.hpp"

namespace testutil {

using aimdit::nn::Tensor;

inline Tensor random_tensor(aimdit::nn::Shape shape, aimdit::nn::Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool grad = false) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  t.set_requires_grad(grad);
  return t;
}

inline aimdit::ModalityFeatures random_features(std::size_t d, std::array<std::size_t, 3> lengths,
                                                aimdit::nn::Rng& rng) {
  aimdit::ModalityFeatures f;
  for (std::size_t m = 0; m < 3; ++m) f.streams[m] = random_tensor({lengths[m], d}, rng);
  return f;
}

inline double rel_error(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); }

// Worst relative error between backward() and central differences of the
// scalar loss over every entry of every input.
inline double max_grad_error(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs, double eps = 1e-5) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    aimdit::nn::Graph g;
    g.backward(loss_fn());
  }
  double worst = 0.0;
  aimdit::nn::NoGradGuard no_grad;
  for (auto& t : inputs) {
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.numel(), 0.0);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double saved = t.data()[i];
      t.mutable_data()[i] = saved + eps;
      const double up = loss_fn().item();
      t.mutable_data()[i] = saved - eps;
      const double down = loss_fn().item();
      t.mutable_data()[i] = saved;
      worst = std::max(worst, rel_error(analytic[i], (up - down) / (2 * eps)));
    }
  }
  return worst;
}

// Scalar probe loss: sum(x * w) for a fixed random weight w, so every output
// entry receives a distinct upstream gradient.
inline Tensor probe(const Tensor& x, const Tensor& w) { return aimdit::nn::sum(aimdit::nn::mul(x, w)); }

}  // namespace testutil
