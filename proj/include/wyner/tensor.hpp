// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors and a tape-based reverse-mode differentiation engine.
//
// The engine is define-by-run: every op on a `Var` evaluates immediately and
// appends a record to its `Tape`. `Tape::backward` then walks the records in
// reverse creation order, which is a valid topological order because an op can
// only consume nodes that already exist.
//
// Supported ops cover what MLPs with Gaussian heads need: matmul, add/sub/mul
// with row broadcasting, negation, scaling, exp, log, square, clamp, ReLU,
// LeakyReLU, reductions, feature-axis concatenation and slicing. Every op
// output is checked for NaN/Inf and raises `NonFiniteValue` naming the op.
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "wyner/errors.hpp"

namespace wyner {

/// Row-major float64 array. Rank 0 is a scalar, rank 1 a row vector, rank 2 a
/// [rows, cols] matrix. Higher ranks are storable but only elementwise ops
/// accept them.
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor({}, std::vector<double>{value}); }
  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, 0.0); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  /// Rows/cols of the 2-d view: rank 0 and 1 tensors are a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// The scalar held by a size-1 tensor.
  double item() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  double item() const { return value().item(); }
};

enum class OpKind {
  kConstant,
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kScale,
  kAddScalar,
  kExp,
  kLog,
  kSquare,
  kClamp,
  kRelu,
  kLeakyRelu,
  kSum,
  kMean,
  kRowSum,
  kConcat,
  kSlice,
};

std::string_view op_name(OpKind op);

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A constant input owned by the tape; never receives a gradient.
  Var constant(Tensor value);
  /// A parameter referenced (not copied) by the tape. The referenced tensor
  /// must outlive the tape and must not change while the tape is in use.
  Var leaf(const Tensor& param, bool trainable = true);
  /// An owned input that receives a gradient (used by gradient checks).
  Var variable(Tensor value);

  /// Reverse sweep from a scalar output. Gradients are recomputed from zero on
  /// every call, so replaying a tape gives identical results.
  void backward(Var output);

  /// Gradient of the last backward output w.r.t. `v`; zeros when `v` did not
  /// contribute or is not differentiable.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const;

  // Op recording. Public so that free functions below can forward here.
  Var record(OpKind op, Tensor value, std::vector<std::size_t> inputs, double p0 = 0.0,
             double p1 = 0.0);

 private:
  struct Node {
    OpKind op = OpKind::kConstant;
    std::vector<std::size_t> inputs;
    double p0 = 0.0;
    double p1 = 0.0;
    bool needs_grad = false;
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool grad_live = false;
  };

  Tensor& grad_slot(std::size_t id);
  void propagate(std::size_t id);

  std::vector<Node> nodes_;
  bool has_backward_ = false;

  friend struct Var;
};

// ---- ops -----------------------------------------------------------------

Var matmul(Var a, Var b);
/// Elementwise; either operand may be a single row broadcast over the rows of
/// the other.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
/// Clamp to [lo, hi]; the gradient passes through inside the closed interval.
Var clamp(Var a, double lo, double hi);
/// ReLU with subgradient 0 at 0.
Var relu(Var a);
Var leaky_relu(Var a, double slope = 0.2);
Var sum(Var a);
Var mean(Var a);
/// Sum over the feature axis: [rows, cols] -> [rows, 1].
Var row_sum(Var a);
/// Concatenate along the feature axis; all parts share the row count.
Var concat(std::initializer_list<Var> parts);
Var concat(const std::vector<Var>& parts);
/// Columns [begin, end) of a 2-d value.
Var slice(Var a, std::size_t begin, std::size_t end);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }

// ---- verification --------------------------------------------------------

/// Loss builder used by `grad_check`: receives the parameters bound on a
/// fresh tape and returns a scalar. Must be deterministic.
using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Max over all coordinates of |analytic - central difference| /
/// max(1, |central difference|).
double grad_check(const LossBuilder& loss_fn, std::vector<Tensor> params, double h = 1e-5);

}  // namespace wyner
