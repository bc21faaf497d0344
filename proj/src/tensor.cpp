#include "srop/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "srop/errors.hpp"

namespace srop {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool t_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;
using Backward = std::function<void(detail::Node&)>;

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return node;
}

// Builds an op result; records the adjoint only when some input needs it.
Tensor make_op(Shape shape, std::vector<double> values, std::vector<NodePtr> inputs,
               Backward backward) {
  auto node = make_leaf(std::move(shape), std::move(values), false);
  if (t_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const NodePtr& n) { return n->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->leaf = false;
      node->inputs = std::move(inputs);
      node->backward = std::move(backward);
    }
  }
  return Tensor::from_node(std::move(node));
}

detail::Node* grad_target(detail::Node& self, std::size_t i) {
  auto* in = self.inputs[i].get();
  if (!in->requires_grad) return nullptr;
  in->ensure_grad();
  return in;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_rank2(const Tensor& t, const char* op) {
  require_defined(t, op);
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  require_defined(a, "unary");
  auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_op(a.shape(), std::move(out), {a.node()}, [deriv](detail::Node& self) {
    auto* x = grad_target(self, 0);
    if (!x) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      x->grad[i] += self.grad[i] * deriv(x->value[i], self.value[i]);
    }
  });
}

enum class BinaryKind { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  require_defined(a, name);
  require_defined(b, name);
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (!same && !a_scalar && !b_scalar) {
    throw DimensionError(std::string(name) + ": incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const Shape shape = same ? a.shape() : (a_scalar ? b.shape() : a.shape());
  const std::size_t n = shape_numel(shape);
  const std::size_t sa = (a.numel() == n) ? 1 : 0;
  const std::size_t sb = (b.numel() == n) ? 1 : 0;
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i * sa];
    const double y = bv[i * sb];
    switch (kind) {
      case BinaryKind::add: out[i] = x + y; break;
      case BinaryKind::sub: out[i] = x - y; break;
      case BinaryKind::mul: out[i] = x * y; break;
    }
  }
  return make_op(shape, std::move(out), {a.node(), b.node()},
                 [kind, sa, sb](detail::Node& self) {
                   auto* x = grad_target(self, 0);
                   auto* y = grad_target(self, 1);
                   const auto& xv = self.inputs[0]->value;
                   const auto& yv = self.inputs[1]->value;
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     const double g = self.grad[i];
                     switch (kind) {
                       case BinaryKind::add:
                         if (x) x->grad[i * sa] += g;
                         if (y) y->grad[i * sb] += g;
                         break;
                       case BinaryKind::sub:
                         if (x) x->grad[i * sa] += g;
                         if (y) y->grad[i * sb] -= g;
                         break;
                       case BinaryKind::mul:
                         if (x) x->grad[i * sa] += g * yv[i * sb];
                         if (y) y->grad[i * sb] += g * xv[i * sa];
                         break;
                     }
                   }
                 });
}

}  // namespace

// ---------------------------------------------------------------------------
// Shapes and the Tensor handle

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::values() const {
  require_defined(*this, "values");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  require_defined(*this, "mutable_values");
  if (!node_->leaf) throw StateError("cannot mutate the values of an op result");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  require_defined(*this, "set_requires_grad");
  if (!node_->leaf) throw StateError("requires_grad can only be changed on leaves");
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return !defined() || node_->leaf; }

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require_defined(*this, "grad");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  require_defined(*this, "mutable_grad");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (defined()) node_->grad.clear();
}

Tensor Tensor::clone() const {
  require_defined(*this, "clone");
  return Tensor(node_->shape, node_->value, node_->requires_grad);
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return Tensor(node_->shape, node_->value, false);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_mode_enabled() { return t_grad_enabled; }

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) *
                                       ConstMap(b.values().data(), k, n);
  return make_op({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](detail::Node& self) {
    ConstMap dc(self.grad.data(), m, n);
    if (auto* x = grad_target(self, 0)) {
      MutMap(x->grad.data(), m, k).noalias() +=
          dc * ConstMap(self.inputs[1]->value.data(), k, n).transpose();
    }
    if (auto* y = grad_target(self, 1)) {
      MutMap(y->grad.data(), k, n).noalias() +=
          ConstMap(self.inputs[0]->value.data(), m, k).transpose() * dc;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = ConstMap(a.values().data(), m, n).transpose();
  return make_op({n, m}, std::move(out), {a.node()}, [m, n](detail::Node& self) {
    if (auto* x = grad_target(self, 0)) {
      MutMap(x->grad.data(), m, n) += ConstMap(self.grad.data(), n, m).transpose();
    }
  });
}

// ---------------------------------------------------------------------------
// Pointwise

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sin(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  auto v = a.values();
  double s = 0.0;
  for (double x : v) s += x;
  return make_op({}, {s}, {a.node()}, [](detail::Node& self) {
    if (auto* x = grad_target(self, 0)) {
      for (auto& g : x->grad) g += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor row_sum(const Tensor& a) {
  require_rank2(a, "row_sum");
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto v = a.values();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += v[i * n + j];
    out[i] = s;
  }
  return make_op({m}, std::move(out), {a.node()}, [m, n](detail::Node& self) {
    if (auto* x = grad_target(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) x->grad[i * n + j] += self.grad[i];
      }
    }
  });
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias) {
  require_rank2(a, "add_row_bias");
  require_defined(bias, "add_row_bias");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (bias.numel() != n) {
    throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) + " does not fit " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  return make_op({m, n}, std::move(out), {a.node(), bias.node()}, [m, n](detail::Node& self) {
    if (auto* x = grad_target(self, 0)) {
      for (std::size_t i = 0; i < m * n; ++i) x->grad[i] += self.grad[i];
    }
    if (auto* b = grad_target(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) b->grad[j] += self.grad[i * n + j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_op(std::move(shape), std::move(out), {a.node()}, [](detail::Node& self) {
    if (auto* x = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_rows");
  const std::size_t n = a.dim(1);
  if (begin >= end || end > a.dim(0)) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " + shape_str(a.shape()));
  }
  auto v = a.values();
  std::vector<double> out(v.begin() + begin * n, v.begin() + end * n);
  return make_op({end - begin, n}, std::move(out), {a.node()}, [begin, n](detail::Node& self) {
    if (auto* x = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) x->grad[begin * n + i] += self.grad[i];
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") outside " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  auto v = a.values();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(v.begin() + i * n + begin, w, out.begin() + i * w);
  }
  return make_op({m, w}, std::move(out), {a.node()}, [m, n, w, begin](detail::Node& self) {
    if (auto* x = grad_target(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) x->grad[i * n + begin + j] += self.grad[i * w + j];
      }
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
  std::size_t rows = 0;
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    offsets.push_back(rows * n);
    rows += p.dim(0);
    inputs.push_back(p.node());
  }
  std::vector<double> out;
  out.reserve(rows * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_op({rows, n}, std::move(out), std::move(inputs),
                 [offsets](detail::Node& self) {
                   for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                     auto* x = grad_target(self, p);
                     if (!x) continue;
                     for (std::size_t i = 0; i < x->grad.size(); ++i) {
                       x->grad[i] += self.grad[offsets[p] + i];
                     }
                   }
                 });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  require_rank2(parts[0], "concat_cols");
  const std::size_t m = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> col_offsets, widths;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    col_offsets.push_back(cols);
    widths.push_back(p.dim(1));
    cols += p.dim(1);
    inputs.push_back(p.node());
  }
  std::vector<double> out(m * cols);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].values();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(v.begin() + i * widths[p], widths[p], out.begin() + i * cols + col_offsets[p]);
    }
  }
  return make_op({m, cols}, std::move(out), std::move(inputs),
                 [m, cols, col_offsets, widths](detail::Node& self) {
                   for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                     auto* x = grad_target(self, p);
                     if (!x) continue;
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t j = 0; j < widths[p]; ++j) {
                         x->grad[i * widths[p] + j] += self.grad[i * cols + col_offsets[p] + j];
                       }
                     }
                   }
                 });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank2(a, "gather_rows");
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto v = a.values();
  std::vector<double> out(rows.size() * n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " outside " +
                           shape_str(a.shape()));
    }
    std::copy_n(v.begin() + rows[r] * n, n, out.begin() + r * n);
  }
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return make_op({rows.size(), n}, std::move(out), {a.node()},
                 [index = std::move(index), n](detail::Node& self) {
                   if (auto* x = grad_target(self, 0)) {
                     for (std::size_t r = 0; r < index.size(); ++r) {
                       for (std::size_t j = 0; j < n; ++j) {
                         x->grad[index[r] * n + j] += self.grad[r * n + j];
                       }
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, k, stride, pad, oh, ow;
};

// cols is [cin*k*k x oh*ow] for one image.
void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = cols + ((c * g.k + ki) * g.k + kj) * plane;
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const long ii = static_cast<long>(oi * g.stride + ki) - static_cast<long>(g.pad);
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const long jj = static_cast<long>(oj * g.stride + kj) - static_cast<long>(g.pad);
            const bool inside = ii >= 0 && jj >= 0 && ii < static_cast<long>(g.h) &&
                                jj < static_cast<long>(g.w);
            row[oi * g.ow + oj] = inside ? img[(c * g.h + ii) * g.w + jj] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = cols + ((c * g.k + ki) * g.k + kj) * plane;
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const long ii = static_cast<long>(oi * g.stride + ki) - static_cast<long>(g.pad);
          if (ii < 0 || ii >= static_cast<long>(g.h)) continue;
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const long jj = static_cast<long>(oj * g.stride + kj) - static_cast<long>(g.pad);
            if (jj < 0 || jj >= static_cast<long>(g.w)) continue;
            img[(c * g.h + ii) * g.w + jj] += row[oi * g.ow + oj];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_defined(input, "conv2d");
  require_defined(kernels, "conv2d");
  require_defined(bias, "conv2d");
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3) {
    throw DimensionError("conv2d: input must be [C x H x W] or [N x C x H x W], got " +
                         shape_str(input.shape()));
  }
  if (kernels.rank() != 4 || kernels.dim(2) != kernels.dim(3)) {
    throw DimensionError("conv2d: kernels must be [C_out x C_in x k x k], got " +
                         shape_str(kernels.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  ConvGeometry g{};
  const std::size_t off = batched ? 1 : 0;
  g.batch = batched ? input.dim(0) : 1;
  g.cin = input.dim(off);
  g.h = input.dim(off + 1);
  g.w = input.dim(off + 2);
  g.cout = kernels.dim(0);
  g.k = kernels.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (kernels.dim(1) != g.cin) {
    throw DimensionError("conv2d: kernel channels " + shape_str(kernels.shape()) +
                         " do not match input " + shape_str(input.shape()));
  }
  if (bias.numel() != g.cout) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(g.cout) + " output channels");
  }
  const long span_h = static_cast<long>(g.h + 2 * g.pad) - static_cast<long>(g.k);
  const long span_w = static_cast<long>(g.w + 2 * g.pad) - static_cast<long>(g.k);
  if (span_h < 0 || span_w < 0 || span_h % static_cast<long>(stride) != 0 ||
      span_w % static_cast<long>(stride) != 0) {
    throw ConfigError("conv2d: output size is not a positive integer for input " +
                      shape_str(input.shape()) + ", k=" + std::to_string(g.k) +
                      ", stride=" + std::to_string(stride) + ", padding=" +
                      std::to_string(padding));
  }
  g.oh = static_cast<std::size_t>(span_h) / stride + 1;
  g.ow = static_cast<std::size_t>(span_w) / stride + 1;

  const std::size_t plane = g.oh * g.ow;
  const std::size_t patch = g.cin * g.k * g.k;
  const std::size_t in_size = g.cin * g.h * g.w;
  std::vector<double> out(g.batch * g.cout * plane);
  std::vector<double> cols(patch * plane);
  ConstMap wmat(kernels.values().data(), g.cout, patch);
  auto bv = bias.values();
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(input.values().data() + b * in_size, g, cols.data());
    MutMap o(out.data() + b * g.cout * plane, g.cout, plane);
    o.noalias() = wmat * ConstMap(cols.data(), patch, plane);
    for (std::size_t c = 0; c < g.cout; ++c) o.row(c).array() += bv[c];
  }
  Shape shape = batched ? Shape{g.batch, g.cout, g.oh, g.ow} : Shape{g.cout, g.oh, g.ow};
  return make_op(std::move(shape), std::move(out), {input.node(), kernels.node(), bias.node()},
                 [g, plane, patch, in_size](detail::Node& self) {
                   auto* x = grad_target(self, 0);
                   auto* kw = grad_target(self, 1);
                   auto* bb = grad_target(self, 2);
                   std::vector<double> cols(patch * plane);
                   std::vector<double> dcols(patch * plane);
                   ConstMap wmat(self.inputs[1]->value.data(), g.cout, patch);
                   for (std::size_t b = 0; b < g.batch; ++b) {
                     ConstMap dout(self.grad.data() + b * g.cout * plane, g.cout, plane);
                     if (bb) {
                       for (std::size_t c = 0; c < g.cout; ++c) bb->grad[c] += dout.row(c).sum();
                     }
                     if (kw) {
                       im2col(self.inputs[0]->value.data() + b * in_size, g, cols.data());
                       MutMap(kw->grad.data(), g.cout, patch).noalias() +=
                           dout * ConstMap(cols.data(), patch, plane).transpose();
                     }
                     if (x) {
                       MutMap(dcols.data(), patch, plane).noalias() = wmat.transpose() * dout;
                       col2im_add(dcols.data(), g, x->grad.data() + b * in_size);
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// LSTM

LstmState lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                    const LstmWeights& weights) {
  require_defined(x, "lstm_step");
  require_defined(h, "lstm_step");
  require_defined(c, "lstm_step");
  const bool vector_form = x.rank() == 1;
  const Tensor x2 = vector_form ? reshape(x, {1, x.dim(0)}) : x;
  const Tensor h2 = h.rank() == 1 ? reshape(h, {1, h.dim(0)}) : h;
  const Tensor c2 = c.rank() == 1 ? reshape(c, {1, c.dim(0)}) : c;
  require_rank2(x2, "lstm_step");
  require_rank2(h2, "lstm_step");
  const std::size_t hidden = h2.dim(1);
  const auto& wi = weights.input_weights;
  const auto& wh = weights.hidden_weights;
  if (wi.rank() != 2 || wi.dim(0) != x2.dim(1) || wi.dim(1) != 4 * hidden || wh.rank() != 2 ||
      wh.dim(0) != hidden || wh.dim(1) != 4 * hidden || weights.bias.numel() != 4 * hidden ||
      c2.shape() != h2.shape() || x2.dim(0) != h2.dim(0)) {
    throw DimensionError("lstm_step: inconsistent shapes x " + shape_str(x.shape()) + ", h " +
                         shape_str(h.shape()) + ", c " + shape_str(c.shape()) + ", W_ih " +
                         shape_str(wi.shape()) + ", W_hh " + shape_str(wh.shape()) + ", b " +
                         shape_str(weights.bias.shape()));
  }
  const Tensor gates = add_row_bias(matmul(x2, wi) + matmul(h2, wh), weights.bias);
  const Tensor i = sigmoid(slice_cols(gates, 0, hidden));
  const Tensor f = sigmoid(slice_cols(gates, hidden, 2 * hidden));
  const Tensor g = srop::tanh(slice_cols(gates, 2 * hidden, 3 * hidden));
  const Tensor o = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden));
  Tensor c_next = f * c2 + i * g;
  Tensor h_next = o * srop::tanh(c_next);
  if (h.rank() == 1) {
    h_next = reshape(h_next, {hidden});
    c_next = reshape(c_next, {hidden});
  }
  return {std::move(h_next), std::move(c_next)};
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw DimensionError("mse_loss: prediction " + shape_str(prediction.shape()) +
                         " vs target " + shape_str(target.shape()));
  }
  return mean(square(prediction - target));
}

// ---------------------------------------------------------------------------
// Backward

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must have a single element, got " +
                        shape_str(loss.shape()));
  }
  auto* root = loss.node().get();
  if (root->consumed) throw StateError("backward: graph was already consumed by a previous call");
  if (!root->requires_grad) return;
  if (root->leaf) {
    root->ensure_grad();
    root->grad[0] += 1.0;
    return;
  }

  std::vector<detail::Node*> order;
  std::vector<std::shared_ptr<detail::Node>> keep;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && !in->leaf && seen.insert(in.get()).second) {
        keep.push_back(in);
        stack.push_back(in.get());
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto* n : order) {
    if (n->grad.empty() || !n->backward) continue;
    n->backward(*n);
  }
  for (auto* n : order) {
    n->backward = nullptr;
    n->inputs.clear();
    n->consumed = true;
  }
}

}  // namespace srop
