#include "aimdit/numerics/tensor.hpp"

#include <atomic>
#include <set>
#include <sstream>
#include <string>

#include "internal.hpp"

namespace aimdit::nn {

namespace {

thread_local Precision tl_precision = Precision::kFloat64;
thread_local std::vector<Graph*> tl_graphs;
std::atomic<std::uint64_t> g_next_serial{1};

std::string g_fault_op;
double g_fault_scale = 1.0;

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  for (auto s : shape) {
    if (s == 0) fail(ErrorCode::kDimension, "tensor shape " + shape_str(shape) + " has a zero extent");
  }
  auto impl = std::make_shared<Impl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  for (auto s : shape) {
    if (s == 0) fail(ErrorCode::kDimension, "tensor shape " + shape_str(shape) + " has a zero extent");
  }
  if (shape_numel(shape) != values.size()) {
    fail(ErrorCode::kDimension, "shape " + shape_str(shape) + " does not hold " +
                                    std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor::Impl& Tensor::impl() const {
  if (!impl_) fail(ErrorCode::kGraph, "use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    fail(ErrorCode::kDimension, "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<const double> Tensor::data() const { return impl().data; }
std::span<double> Tensor::mutable_data() { return impl().data; }

double Tensor::item() const {
  if (numel() != 1) fail(ErrorCode::kDimension, "item() on tensor of shape " + shape_str(shape()));
  return impl().data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  const auto& s = shape();
  if (s.size() != 2 || row >= s[0] || col >= s[1]) {
    fail(ErrorCode::kDimension, "index (" + std::to_string(row) + "," + std::to_string(col) +
                                    ") invalid for " + shape_str(s));
  }
  return impl().data[row * s[1] + col];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  impl().requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return detail::TensorAccess::has_grad(*this); }

std::span<const double> Tensor::grad() const { return impl().grad; }

std::span<double> Tensor::mutable_grad() { return detail::TensorAccess::grad(*this); }

void Tensor::zero_grad() {
  auto& g = impl().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::clone() const { return from(shape(), impl().data); }

Precision current_precision() { return tl_precision; }

double round_to_precision(double v) {
  return tl_precision == Precision::kFloat32 ? static_cast<double>(static_cast<float>(v)) : v;
}

PrecisionScope::PrecisionScope(Precision p) : saved_(tl_precision) { tl_precision = p; }
PrecisionScope::~PrecisionScope() { tl_precision = saved_; }

Graph::Graph() : serial_(g_next_serial.fetch_add(1)) { tl_graphs.push_back(this); }

Graph::~Graph() {
  // Scopes are strictly nested, so this graph is on top.
  if (!tl_graphs.empty() && tl_graphs.back() == this) tl_graphs.pop_back();
}

Graph* Graph::active() { return tl_graphs.empty() ? nullptr : tl_graphs.back(); }

void Graph::record(const Tensor& out, std::function<void()> backward_fn) {
  if (consumed_) fail(ErrorCode::kGraph, "recording onto a graph that was already swept");
  out.impl().graph_serial = serial_;
  tape_.push_back(std::move(backward_fn));
}

void Graph::backward(const Tensor& loss) {
  if (consumed_) fail(ErrorCode::kGraph, "stale graph: backward already ran on this graph");
  if (loss.numel() != 1) {
    fail(ErrorCode::kDimension, "backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad() || loss.impl().graph_serial != serial_) {
    fail(ErrorCode::kGraph, "loss was not produced by a recorded operation on this graph");
  }
  consumed_ = true;
  detail::grad_of(loss)[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  tape_.clear();
}

NoGradGuard::NoGradGuard() { tl_graphs.push_back(nullptr); }
NoGradGuard::~NoGradGuard() {
  if (!tl_graphs.empty() && tl_graphs.back() == nullptr) tl_graphs.pop_back();
}

void backward(const Tensor& loss) {
  const auto serial = detail::TensorAccess::impl(loss).graph_serial;
  for (auto it = tl_graphs.rbegin(); it != tl_graphs.rend(); ++it) {
    if (*it && (*it)->serial() == serial) {
      (*it)->backward(loss);
      return;
    }
  }
  fail(ErrorCode::kGraph, "no live graph on this thread produced the loss");
}

namespace testing {
void set_backward_fault(const std::string& op, double scale) {
  static const std::set<std::string> kOps{
      "add",    "add_rowwise", "add_scalar",      "concat", "conv2d_same", "cross_entropy", "gelu",
      "layer_norm", "matmul", "mean",        "mean_stack",      "mul",    "pad_rows",    "reshape",
      "scale",  "slice",       "softmax_lastdim", "sub",    "sum",         "transpose"};
  if (!kOps.count(op)) fail(ErrorCode::kConfig, "no backward to corrupt for unknown op '" + op + "'");
  g_fault_op = op;
  g_fault_scale = scale;
}
void clear_backward_fault() {
  g_fault_op.clear();
  g_fault_scale = 1.0;
}
}  // namespace testing

namespace detail {

void finish(Tensor& out) {
  if (tl_precision != Precision::kFloat32) return;
  for (auto& v : vals(out)) v = static_cast<double>(static_cast<float>(v));
}

double fault_scale(std::string_view op) {
  return (!g_fault_op.empty() && g_fault_op == op) ? g_fault_scale : 1.0;
}

Graph* recording(Tensor& out, std::initializer_list<const Tensor*> inputs) {
  Graph* g = Graph::active();
  if (!g) return nullptr;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) {
      out.set_requires_grad(true);
      return g;
    }
  }
  return nullptr;
}

Graph* recording(Tensor& out, const std::vector<Tensor>& inputs) {
  Graph* g = Graph::active();
  if (!g) return nullptr;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) {
      out.set_requires_grad(true);
      return g;
    }
  }
  return nullptr;
}

}  // namespace detail
}  // namespace aimdit::nn
