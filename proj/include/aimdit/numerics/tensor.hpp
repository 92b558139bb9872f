#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace aimdit::nn {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Graph;

namespace detail {
struct TensorAccess;
}

// Shared handle to a dense row-major array of doubles. Copies alias the same
// storage; use clone() for an independent copy. Masks are ordinary tensors
// holding 0.0 / 1.0.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access for parameter updates and test fixtures. Writes are
  // not recorded on any graph.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat) const { return data()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient buffer on first use.
  std::span<double> mutable_grad();
  void zero_grad();

  // Deep copy that does not require grad and is detached from any graph.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const noexcept {
    return impl_ == other.impl_;
  }

 private:
  struct Impl;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;

  friend class Graph;
  friend struct detail::TensorAccess;
};

enum class Precision { kFloat32, kFloat64 };

// Precision applied to the values produced by every forward operation on this
// thread. kFloat32 rounds each result to the nearest float.
Precision current_precision();
double round_to_precision(double v);

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

// Tape of executed operations. Constructing a Graph makes it the recording
// target for the current thread until it is destroyed; graphs nest LIFO.
// Operations on tensors that require grad are recorded only while a graph is
// active, otherwise they run in inference mode.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* active();

  // Reverse-mode sweep from a scalar produced on this graph. A graph can be
  // swept once.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return tape_.size(); }
  std::uint64_t serial() const noexcept { return serial_; }
  bool consumed() const noexcept { return consumed_; }

  // Internal: called by operations.
  void record(const Tensor& out, std::function<void()> backward_fn);

 private:
  std::uint64_t serial_;
  bool consumed_ = false;
  std::vector<std::function<void()>> tape_;
};

// Suspends recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Sweeps the graph that produced `loss`.
void backward(const Tensor& loss);

namespace testing {
// Scales every gradient contribution emitted by the named operation's
// backward pass. Used as a negative control for gradient checks.
void set_backward_fault(const std::string& op, double scale);
void clear_backward_fault();
}  // namespace testing

}  // namespace aimdit::nn
