#pragma once

// Dense row-major float64 tensors with tape-free reverse-mode autodiff.
//
// Every op records its inputs and an adjoint closure on the output node when
// any input requires a gradient. backward() orders the reachable nodes by
// creation sequence (a topological order) and replays the adjoints in
// reverse, exactly once per node. Graphs are single-threaded; independent
// graphs may live on different threads.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace srop {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// In-place access for leaves (parameters, inputs). Throws StateError on op results.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Deep copy of the values as a new leaf with the same requires_grad flag.
  Tensor clone() const;
  /// Same values as a constant leaf outside any graph.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
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

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Pointwise. Binary ops accept equal shapes or a single-element operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor square(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Reductions and broadcasting.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [m x n] -> [m]
Tensor row_sum(const Tensor& a);
/// [m x n] + [n] broadcast over rows.
Tensor add_row_bias(const Tensor& a, const Tensor& bias);

// Shape manipulation (all differentiable).
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
/// out[r] = a[rows[r]] for a 2-D tensor; repeated indices accumulate in backward.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

/// Cross-correlation (no kernel flip). input [N x C x H x W] or [C x H x W],
/// kernels [C_out x C x k x k], bias [C_out].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t padding);

struct LstmWeights {
  Tensor input_weights;   // [d_in x 4H], gate order i, f, g, o
  Tensor hidden_weights;  // [H x 4H]
  Tensor bias;            // [4H]
};

struct LstmState {
  Tensor h;
  Tensor c;
};

/// One LSTM step. x is [d_in] or [n x d_in]; h and c match as [H] or [n x H].
LstmState lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                    const LstmWeights& weights);

/// Mean squared error against a constant target of the same shape.
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

/// Populates grads of every requires_grad ancestor of a single-element loss.
void backward(const Tensor& loss);

}  // namespace srop
