#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace neuroclip {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor;

namespace detail {

// Gradient destination for one operand of a recorded op. Empty when the
// operand does not require a gradient.
using GradSink = std::span<double>;

// Receives d(loss)/d(output), the output values, and one sink per input.
// Must accumulate (+=) into the sinks.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<const double> out, std::span<GradSink> sinks)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;     // persistent, leaves only; empty means absent
  std::vector<double> pending;  // scratch used during one backward sweep
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

}  // namespace detail

// Dense row-major float64 array with an optional reverse-mode gradient record.
//
// A Tensor is a cheap handle; copies share storage. Values produced by ops are
// immutable, only leaves expose mutable data (parameters updated by optimizers).
// Every op applied to a tensor that requires a gradient records a node; the
// graph lives exactly as long as the handles referencing it.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor full(Shape shape, double value) { return Tensor(std::move(shape), value); }
  static Tensor eye(std::size_t n);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Mutable access is reserved for leaves; mutating an op result would
  // silently invalidate the recorded gradient.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return !node_->backward; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  // Gradient as a fresh tensor; zeros when absent.
  Tensor grad_tensor() const;
  void zero_grad();
  void scale_grad(double factor);
  void clear_grad() { node_->grad.clear(); }

  // Reverse sweep from a scalar. Leaf gradients accumulate across calls.
  void backward() const;

  // Value copy with no graph attached.
  Tensor detach() const;

  const char* op_name() const { return node_->op; }
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Records an op result. The backward closure is only kept when gradient
  // recording is enabled and at least one input requires a gradient.
  static Tensor from_op(const char* op, Shape shape, std::vector<double> values, std::span<const Tensor> inputs,
                        detail::BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Bitwise comparison of shape and payload.
bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace neuroclip
