#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string_view>
#include <vector>

#include "aimdit/error.hpp"
#include "aimdit/numerics/tensor.hpp"

namespace aimdit::nn {

struct Tensor::Impl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t graph_serial = 0;
};

namespace detail {

struct TensorAccess {
  static Tensor::Impl& impl(const Tensor& t) { return t.impl(); }
  static std::vector<double>& values(const Tensor& t) { return t.impl().data; }
  static std::vector<double>& grad(const Tensor& t) {
    auto& im = t.impl();
    if (im.grad.size() != im.data.size()) im.grad.assign(im.data.size(), 0.0);
    return im.grad;
  }
  static bool has_grad(const Tensor& t) {
    return t.impl().grad.size() == t.impl().data.size() && !t.impl().data.empty();
  }
};

inline std::vector<double>& vals(const Tensor& t) {
  return TensorAccess::values(t);
}
inline std::vector<double>& grad_of(const Tensor& t) {
  return TensorAccess::grad(t);
}

// Rounds freshly computed values to the thread's precision.
void finish(Tensor& out);

// Multiplier applied to gradient contributions of `op` (1.0 unless a fault is
// injected).
double fault_scale(std::string_view op);

// Returns the graph to record on when any input requires grad, else nullptr.
// Marks `out` as requiring grad when recording.
Graph* recording(Tensor& out, std::initializer_list<const Tensor*> inputs);
Graph* recording(Tensor& out, const std::vector<Tensor>& inputs);

}  // namespace detail
}  // namespace aimdit::nn
