#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nesla {

using Shape = std::vector<std::size_t>;

// Raised for incompatible operand shapes; the message names the op and the shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an op produces NaN or Inf; the message names the producing op.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates this node's grad into the grads of its parents.
  std::function<void(const Node&)> backward;
};

}  // namespace detail

/// Dense row-major double tensor with an optional gradient slot.
///
/// A Tensor is a cheap handle; copies share storage. Values are treated as
/// immutable once produced, except through mutable_values(), which is reserved
/// for optimizer updates, checkpoint loading and finite-difference probing.
/// Ops record their backward rule when any operand requires a gradient, so a
/// scalar result can call backward() to fill the grads of every leaf it
/// depends on.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double at(std::size_t i) const;
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Reverse-mode sweep from a single-element tensor. Leaf grads accumulate.
  void backward() const;

  // Copy of the values with no history and no gradient.
  Tensor detach() const;

  static Tensor from_node(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// While alive on a thread, ops on that thread record no backward graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// ---- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x * s where s holds a single element.
Tensor scale_by(const Tensor& x, const Tensor& s);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor log1p(const Tensor& x);

// ---- reductions and reshaping ----------------------------------------------
Tensor sum(const Tensor& x);
// Element i of x as a one-element tensor.
Tensor pick(const Tensor& x, std::size_t i);
Tensor reshape(const Tensor& x, Shape shape);
// [C x T] -> [C], mean over time.
Tensor global_avg_pool_time(const Tensor& x);
// [C x T] -> [1 x T], sum over channels.
Tensor sum_rows(const Tensor& x);
// Rows [begin, end) of a rank-2 tensor.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
// Stacks rank-2 tensors with equal column counts along the channel axis.
Tensor concat_channels(std::span<const Tensor> parts);
// Splits [C x T] into `parts` contiguous channel groups of C/parts rows.
std::vector<Tensor> split_channels(const Tensor& x, std::size_t parts);

// ---- broadcasting products -------------------------------------------------
// x[c, t] * gate[c]; x is [C x T], gate is [C].
Tensor scale_channels(const Tensor& x, const Tensor& gate);
// x[c, t] + bias[c]; x is [C x T], bias is [C].
Tensor shift_channels(const Tensor& x, const Tensor& bias);
// x[c, t] * weight[0, t]; x is [C x T], weight is [1 x T].
Tensor scale_frames(const Tensor& x, const Tensor& weight);

// ---- linear algebra --------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
// weight [M x N] times x [N] plus bias [M].
Tensor linear(const Tensor& weight, const Tensor& x, const Tensor& bias);
// Cross-correlation along time with zero "same" padding.
// input [Cin x T], kernel [Cout x Cin x k] with k odd, bias [Cout].
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t dilation = 1);

// ---- probabilistic ---------------------------------------------------------
// Max-subtracted softmax along `axis` of a rank-1 or rank-2 tensor.
Tensor softmax(const Tensor& x, std::size_t axis = 0);
// -log softmax(logits)[label]; logits has rank 1.
Tensor cross_entropy(const Tensor& logits, std::size_t label);

}  // namespace nesla
