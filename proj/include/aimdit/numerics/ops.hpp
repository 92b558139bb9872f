#pragma once

#include <cstddef>
#include <vector>

#include "aimdit/numerics/tensor.hpp"

// Differentiable primitives. Every function validates shapes and throws
// aimdit::Error(kDimension / kConfig) on mismatch. Results are recorded on the
// active Graph when any input requires grad.
namespace aimdit::nn {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

// x[m x n] + bias[n] broadcast over rows.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
// x[m x k] * w[k x n] + b[n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Softmax over the last axis. `mask` (optional) holds 1 for valid and 0 for
// excluded entries; it either matches x's shape or is a single row of length
// n broadcast over all rows. Excluded entries get exactly 0.
Tensor softmax_lastdim(const Tensor& x, const Tensor& mask = {});

// x * Phi(x) with the erf-based Gaussian CDF.
Tensor gelu(const Tensor& x);

// Cross-correlation of a single-channel image with zero "same" padding.
// kernel sides must be odd; bias is a one-element tensor.
Tensor conv2d_same(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// Appends zero rows to x[T x d] up to `target` rows.
Tensor pad_rows(const Tensor& x, std::size_t target);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Elements [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

// Mean along an axis; the axis is removed (a rank-1 input yields shape [1]).
Tensor mean(const Tensor& x, std::size_t axis);
// Sum of all elements as a one-element tensor.
Tensor sum(const Tensor& x);

// Elementwise mean of equally shaped tensors. Equal inputs reproduce the
// input exactly.
Tensor mean_stack(const std::vector<Tensor>& xs);

// Normalizes each row of x over its last axis, then applies gain and shift.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps = 1e-5);

// Mean over the batch of -log(max(probs[i, labels[i]], 1e-12)).
Tensor cross_entropy_from_probs(const Tensor& probs, const std::vector<int>& labels);

}  // namespace aimdit::nn
