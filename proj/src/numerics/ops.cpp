#include "aimdit/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "internal.hpp"

namespace aimdit::nn {

using detail::grad_of;
using detail::vals;

namespace {

bool reached(const Tensor& out) { return detail::TensorAccess::has_grad(out); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::kDimension, std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    fail(ErrorCode::kDimension, std::string(op) + ": expected rank " + std::to_string(rank) +
                                    ", got " + shape_str(x.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto& o = vals(out);
  const auto& av = vals(a);
  const auto& bv = vals(b);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&a, &b})) {
    g->record(out, [a, b, out] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const double f = detail::fault_scale("add");
      if (a.requires_grad()) {
        auto& ga = grad_of(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += f * go[i];
      }
      if (b.requires_grad()) {
        auto& gb = grad_of(b);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += f * go[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto& o = vals(out);
  const auto& av = vals(a);
  const auto& bv = vals(b);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&a, &b})) {
    g->record(out, [a, b, out] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const double f = detail::fault_scale("sub");
      if (a.requires_grad()) {
        auto& ga = grad_of(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += f * go[i];
      }
      if (b.requires_grad()) {
        auto& gb = grad_of(b);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= f * go[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  auto& o = vals(out);
  const auto& av = vals(a);
  const auto& bv = vals(b);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&a, &b})) {
    g->record(out, [a, b, out] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const double f = detail::fault_scale("mul");
      const auto& av = vals(a);
      const auto& bv = vals(b);
      if (a.requires_grad()) {
        auto& ga = grad_of(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += f * go[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto& gb = grad_of(b);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += f * go[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out = Tensor::zeros(x.shape());
  auto& o = vals(out);
  const auto& xv = vals(x);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * factor;
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&x})) {
    g->record(out, [x, out, factor] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      auto& gx = grad_of(x);
      const double f = detail::fault_scale("scale") * factor;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += f * go[i];
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& x, double value) {
  Tensor out = Tensor::zeros(x.shape());
  auto& o = vals(out);
  const auto& xv = vals(x);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] + value;
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&x})) {
    g->record(out, [x, out] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      auto& gx = grad_of(x);
      const double f = detail::fault_scale("add_scalar");
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += f * go[i];
    });
  }
  return out;
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require_rank("add_rowwise", x, 2);
  const std::size_t m = x.dim(0);
  const std::size_t n = x.dim(1);
  if (bias.numel() != n) {
    fail(ErrorCode::kDimension, "add_rowwise: bias " + shape_str(bias.shape()) +
                                    " does not match width of " + shape_str(x.shape()));
  }
  Tensor out = Tensor::zeros(x.shape());
  auto& o = vals(out);
  const auto& xv = vals(x);
  const auto& bv = vals(bias);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) o[r * n + c] = xv[r * n + c] + bv[c];
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&x, &bias})) {
    g->record(out, [x, bias, out, m, n] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const double f = detail::fault_scale("add_rowwise");
      if (x.requires_grad()) {
        auto& gx = grad_of(x);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += f * go[i];
      }
      if (bias.requires_grad()) {
        auto& gb = grad_of(bias);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) gb[c] += f * go[r * n + c];
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  if (b.dim(0) != k) {
    fail(ErrorCode::kDimension, "matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  auto& o = vals(out);
  const auto& av = vals(a);
  const auto& bv = vals(b);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &o[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&a, &b})) {
    g->record(out, [a, b, out, m, k, n] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const double f = detail::fault_scale("matmul");
      const auto& av = vals(a);
      const auto& bv = vals(b);
      if (a.requires_grad()) {
        // dA = dO * B^T
        auto& ga = grad_of(a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += go[i * n + j] * bv[p * n + j];
            ga[i * k + p] += f * s;
          }
      }
      if (b.requires_grad()) {
        // dB = A^T * dO
        auto& gb = grad_of(b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = f * av[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * go[i * n + j];
          }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t m = x.dim(0);
  const std::size_t n = x.dim(1);
  Tensor out = Tensor::zeros({n, m});
  auto& o = vals(out);
  const auto& xv = vals(x);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) o[c * m + r] = xv[r * n + c];
  if (Graph* g = detail::recording(out, {&x})) {
    g->record(out, [x, out, m, n] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      auto& gx = grad_of(x);
      const double f = detail::fault_scale("transpose");
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += f * go[c * m + r];
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowwise(matmul(x, w), b);
}

Tensor softmax_lastdim(const Tensor& x, const Tensor& mask) {
  if (x.rank() == 0) fail(ErrorCode::kDimension, "softmax_lastdim: scalar input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  bool broadcast = false;
  if (mask.defined()) {
    if (mask.shape() == x.shape()) {
      broadcast = false;
    } else if (mask.numel() == n) {
      broadcast = true;
    } else {
      fail(ErrorCode::kDimension, "softmax_lastdim: mask " + shape_str(mask.shape()) +
                                      " incompatible with " + shape_str(x.shape()));
    }
  }
  Tensor out = Tensor::zeros(x.shape());
  auto& o = vals(out);
  const auto& xv = vals(x);
  const double* mv = mask.defined() ? vals(mask).data() : nullptr;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &xv[r * n];
    const double* mr = mv ? (broadcast ? mv : mv + r * n) : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (!mr || mr[j] != 0.0) mx = std::max(mx, xr[j]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      fail(ErrorCode::kDimension, "softmax_lastdim: row " + std::to_string(r) +
                                      " is fully masked, distribution undefined");
    }
    double z = 0.0;
    double* orow = &o[r * n];
    for (std::size_t j = 0; j < n; ++j) {
      if (mr && mr[j] == 0.0) continue;
      orow[j] = std::exp(xr[j] - mx);
      z += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= z;
  }
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&x})) {
    g->record(out, [x, out, rows, n] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const auto& ov = vals(out);
      auto& gx = grad_of(x);
      const double f = detail::fault_scale("softmax_lastdim");
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += go[r * n + j] * ov[r * n + j];
        for (std::size_t j = 0; j < n; ++j)
          gx[r * n + j] += f * ov[r * n + j] * (go[r * n + j] - dot);
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto& o = vals(out);
  const auto& xv = vals(x);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * 0.5 * std::erfc(-xv[i] * kInvSqrt2);
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&x})) {
    g->record(out, [x, out] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const auto& xv = vals(x);
      auto& gx = grad_of(x);
      const double f = detail::fault_scale("gelu");
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double v = xv[i];
        const double cdf = 0.5 * std::erfc(-v * kInvSqrt2);
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        gx[i] += f * go[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor conv2d_same(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_rank("conv2d_same", x, 2);
  require_rank("conv2d_same", kernel, 2);
  const std::size_t kh = kernel.dim(0);
  const std::size_t kw = kernel.dim(1);
  if (kh % 2 == 0 || kw % 2 == 0) {
    fail(ErrorCode::kConfig, "conv2d_same: kernel sides must be odd, got " + shape_str(kernel.shape()));
  }
  if (bias.numel() != 1) {
    fail(ErrorCode::kDimension, "conv2d_same: bias must be a single value, got " + shape_str(bias.shape()));
  }
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(x.dim(0));
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(x.dim(1));
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  const std::ptrdiff_t ikw = static_cast<std::ptrdiff_t>(kw);

  Tensor out = Tensor::zeros(x.shape());
  auto& o = vals(out);
  const auto& xv = vals(x);
  const auto& kv = vals(kernel);
  const double b = vals(bias)[0];
  for (std::ptrdiff_t r = 0; r < h; ++r) {
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t i = -ph; i <= ph; ++i) {
        const std::ptrdiff_t rr = r + i;
        if (rr < 0 || rr >= h) continue;
        for (std::ptrdiff_t j = -pw; j <= pw; ++j) {
          const std::ptrdiff_t cc = c + j;
          if (cc < 0 || cc >= w) continue;
          s += kv[(i + ph) * ikw + (j + pw)] * xv[rr * w + cc];
        }
      }
      o[r * w + c] = s + b;
    }
  }
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&x, &kernel, &bias})) {
    g->record(out, [x, kernel, bias, out, h, w, ph, pw, ikw] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const auto& xv = vals(x);
      const auto& kv = vals(kernel);
      const double f = detail::fault_scale("conv2d_same");
      double* gx = x.requires_grad() ? grad_of(x).data() : nullptr;
      double* gk = kernel.requires_grad() ? grad_of(kernel).data() : nullptr;
      double gb = 0.0;
      for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
          const double gout = f * go[r * w + c];
          gb += gout;
          if (gout == 0.0) continue;
          for (std::ptrdiff_t i = -ph; i <= ph; ++i) {
            const std::ptrdiff_t rr = r + i;
            if (rr < 0 || rr >= h) continue;
            for (std::ptrdiff_t j = -pw; j <= pw; ++j) {
              const std::ptrdiff_t cc = c + j;
              if (cc < 0 || cc >= w) continue;
              const std::ptrdiff_t ki = (i + ph) * ikw + (j + pw);
              if (gx) gx[rr * w + cc] += gout * kv[ki];
              if (gk) gk[ki] += gout * xv[rr * w + cc];
            }
          }
        }
      }
      if (bias.requires_grad()) grad_of(bias)[0] += gb;
    });
  }
  return out;
}

Tensor pad_rows(const Tensor& x, std::size_t target) {
  require_rank("pad_rows", x, 2);
  const std::size_t t = x.dim(0);
  const std::size_t d = x.dim(1);
  if (target < t) {
    fail(ErrorCode::kDimension, "pad_rows: target " + std::to_string(target) +
                                    " is shorter than input " + shape_str(x.shape()));
  }
  Tensor out = Tensor::zeros({target, d});
  std::copy(vals(x).begin(), vals(x).end(), vals(out).begin());
  if (Graph* g = detail::recording(out, {&x})) {
    g->record(out, [x, out] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      auto& gx = grad_of(x);
      const double f = detail::fault_scale("pad_rows");
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += f * go[i];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) fail(ErrorCode::kDimension, "concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) fail(ErrorCode::kDimension, "concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) ok = false;
    if (!ok) {
      fail(ErrorCode::kDimension, "concat: shape " + shape_str(s) + " incompatible with " +
                                      shape_str(first) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  Tensor out = Tensor::zeros(out_shape);
  const AxisSplit os = split_axis(out_shape, axis);
  auto& o = vals(out);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const AxisSplit ps = split_axis(p.shape(), axis);
    const auto& pv = vals(p);
    const std::size_t block = ps.len * ps.inner;
    for (std::size_t q = 0; q < ps.outer; ++q)
      std::copy_n(&pv[q * block], block, &o[q * os.len * os.inner + offset * os.inner]);
    offset += ps.len;
  }
  if (Graph* g = detail::recording(out, parts)) {
    g->record(out, [parts, out, os, offsets, axis] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const double f = detail::fault_scale("concat");
      for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const Tensor& p = parts[pi];
        if (!p.requires_grad()) continue;
        const AxisSplit ps = split_axis(p.shape(), axis);
        auto& gp = grad_of(p);
        const std::size_t block = ps.len * ps.inner;
        for (std::size_t q = 0; q < ps.outer; ++q) {
          const double* src = &go[q * os.len * os.inner + offsets[pi] * os.inner];
          double* dst = &gp[q * block];
          for (std::size_t i = 0; i < block; ++i) dst[i] += f * src[i];
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    fail(ErrorCode::kDimension, "slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                    ") on axis " + std::to_string(axis) + " invalid for " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  Tensor out = Tensor::zeros(out_shape);
  const AxisSplit xs = split_axis(s, axis);
  const std::size_t block = (end - begin) * xs.inner;
  const auto& xv = vals(x);
  auto& o = vals(out);
  for (std::size_t q = 0; q < xs.outer; ++q)
    std::copy_n(&xv[q * xs.len * xs.inner + begin * xs.inner], block, &o[q * block]);
  if (Graph* g = detail::recording(out, {&x})) {
    g->record(out, [x, out, xs, begin, block] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      auto& gx = grad_of(x);
      const double f = detail::fault_scale("slice");
      for (std::size_t q = 0; q < xs.outer; ++q) {
        double* dst = &gx[q * xs.len * xs.inner + begin * xs.inner];
        for (std::size_t i = 0; i < block; ++i) dst[i] += f * go[q * block + i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    fail(ErrorCode::kDimension, "reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  Tensor out = Tensor::from(std::move(shape), vals(x));
  if (Graph* g = detail::recording(out, {&x})) {
    g->record(out, [x, out] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      auto& gx = grad_of(x);
      const double f = detail::fault_scale("reshape");
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += f * go[i];
    });
  }
  return out;
}

Tensor mean(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) fail(ErrorCode::kDimension, "mean: axis out of range for " + shape_str(s));
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  const AxisSplit xs = split_axis(s, axis);
  Tensor out = Tensor::zeros(out_shape);
  auto& o = vals(out);
  const auto& xv = vals(x);
  const double inv = 1.0 / static_cast<double>(xs.len);
  for (std::size_t q = 0; q < xs.outer; ++q)
    for (std::size_t i = 0; i < xs.inner; ++i) {
      double acc = 0.0;
      for (std::size_t l = 0; l < xs.len; ++l) acc += xv[(q * xs.len + l) * xs.inner + i];
      o[q * xs.inner + i] = acc * inv;
    }
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&x})) {
    g->record(out, [x, out, xs, inv] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      auto& gx = grad_of(x);
      const double f = detail::fault_scale("mean") * inv;
      for (std::size_t q = 0; q < xs.outer; ++q)
        for (std::size_t l = 0; l < xs.len; ++l)
          for (std::size_t i = 0; i < xs.inner; ++i)
            gx[(q * xs.len + l) * xs.inner + i] += f * go[q * xs.inner + i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : vals(x)) acc += v;
  Tensor out = Tensor::scalar(acc);
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&x})) {
    g->record(out, [x, out] {
      if (!reached(out)) return;
      const double go = detail::fault_scale("sum") * grad_of(out)[0];
      for (auto& v : grad_of(x)) v += go;
    });
  }
  return out;
}

Tensor mean_stack(const std::vector<Tensor>& xs) {
  if (xs.empty()) fail(ErrorCode::kDimension, "mean_stack: no inputs");
  for (const auto& x : xs) require_same_shape("mean_stack", xs.front(), x);
  const std::size_t n = xs.size();
  Tensor out = Tensor::zeros(xs.front().shape());
  auto& o = vals(out);
  const auto& pivot = vals(xs.front());
  if (n == 2) {
    const auto& second = vals(xs[1]);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = (pivot[i] + second[i]) * 0.5;
  } else {
    // Offsets from the first input keep the mean exact when all inputs agree.
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < o.size(); ++i) {
      double dev = 0.0;
      for (std::size_t k = 1; k < n; ++k) dev += vals(xs[k])[i] - pivot[i];
      o[i] = pivot[i] + dev * inv;
    }
  }
  detail::finish(out);
  if (Graph* g = detail::recording(out, xs)) {
    g->record(out, [xs, out, n] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const double f = detail::fault_scale("mean_stack") / static_cast<double>(n);
      for (const auto& x : xs) {
        if (!x.requires_grad()) continue;
        auto& gx = grad_of(x);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += f * go[i];
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  if (x.rank() == 0) fail(ErrorCode::kDimension, "layer_norm: scalar input");
  const std::size_t n = x.shape().back();
  if (gain.numel() != n || shift.numel() != n) {
    fail(ErrorCode::kDimension, "layer_norm: gain/shift " + shape_str(gain.shape()) + "/" +
                                    shape_str(shift.shape()) + " do not match " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const auto& xv = vals(x);
  const auto& gv = vals(gain);
  const auto& sv = vals(shift);
  auto& o = vals(out);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[r * n + j];
    mu *= inv_n;
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = xv[r * n + j] - mu;
      var += c * c;
    }
    var *= inv_n;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xv[r * n + j] - mu) * inv_std[r];
      xhat[r * n + j] = h;
      o[r * n + j] = h * gv[j] + sv[j];
    }
  }
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&x, &gain, &shift})) {
    g->record(out, [x, gain, shift, out, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, n,
                    inv_n] {
      if (!reached(out)) return;
      const auto& go = grad_of(out);
      const auto& gv = vals(gain);
      const double f = detail::fault_scale("layer_norm");
      if (gain.requires_grad()) {
        auto& gg = grad_of(gain);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) gg[j] += f * go[r * n + j] * xhat[r * n + j];
      }
      if (shift.requires_grad()) {
        auto& gs = grad_of(shift);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) gs[j] += f * go[r * n + j];
      }
      if (x.requires_grad()) {
        auto& gx = grad_of(x);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dh = 0.0;
          double mean_dh_h = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = go[r * n + j] * gv[j];
            mean_dh += dh;
            mean_dh_h += dh * xhat[r * n + j];
          }
          mean_dh *= inv_n;
          mean_dh_h *= inv_n;
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = go[r * n + j] * gv[j];
            gx[r * n + j] += f * inv_std[r] * (dh - mean_dh - xhat[r * n + j] * mean_dh_h);
          }
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy_from_probs(const Tensor& probs, const std::vector<int>& labels) {
  require_rank("cross_entropy", probs, 2);
  const std::size_t nb = probs.dim(0);
  const std::size_t c = probs.dim(1);
  if (labels.size() != nb) {
    fail(ErrorCode::kDimension, "cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(nb) + " predictions");
  }
  constexpr double kClamp = 1e-12;
  const auto& pv = vals(probs);
  double acc = 0.0;
  for (std::size_t i = 0; i < nb; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      fail(ErrorCode::kLabelRange, "cross_entropy: label " + std::to_string(labels[i]) +
                                       " outside [0," + std::to_string(c) + ")");
    }
    acc -= std::log(std::max(pv[i * c + static_cast<std::size_t>(labels[i])], kClamp));
  }
  const double inv = 1.0 / static_cast<double>(nb);
  Tensor out = Tensor::scalar(acc * inv);
  detail::finish(out);
  if (Graph* g = detail::recording(out, {&probs})) {
    g->record(out, [probs, labels, out, nb, c, inv] {
      if (!reached(out)) return;
      const double go = detail::fault_scale("cross_entropy") * grad_of(out)[0];
      const auto& pv = vals(probs);
      auto& gp = grad_of(probs);
      for (std::size_t i = 0; i < nb; ++i) {
        const std::size_t idx = i * c + static_cast<std::size_t>(labels[i]);
        if (pv[idx] > kClamp) gp[idx] -= go * inv / pv[idx];
      }
    });
  }
  return out;
}

}  // namespace aimdit::nn
