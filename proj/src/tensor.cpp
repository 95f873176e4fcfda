// SPDX-License-Identifier: Apache-2.0
#include "wyner/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

namespace wyner {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

ConstMatMap view(const Tensor& t) {
  return ConstMatMap(t.raw(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}
MatMap view(Tensor& t) {
  return MatMap(t.raw(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

bool is_row(const Tensor& t) { return t.rank() <= 1 || (t.rank() == 2 && t.rows() == 1); }

enum class Broadcast { kNone, kFirstRow, kSecondRow };

// Resolves the output shape of a binary elementwise op.
Broadcast broadcast_kind(const Tensor& a, const Tensor& b, std::string_view op,
                         std::vector<std::size_t>& out_shape) {
  if (a.same_shape(b)) {
    out_shape = a.shape();
    return Broadcast::kNone;
  }
  if (a.rank() <= 2 && b.rank() <= 2 && a.cols() == b.cols()) {
    if (is_row(b) && !is_row(a)) {
      out_shape = a.shape();
      return Broadcast::kSecondRow;
    }
    if (is_row(a) && !is_row(b)) {
      out_shape = b.shape();
      return Broadcast::kFirstRow;
    }
    if (is_row(a) && is_row(b) && a.size() == b.size()) {
      out_shape = a.rank() >= b.rank() ? a.shape() : b.shape();
      return Broadcast::kNone;
    }
  }
  throw ShapeMismatch(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
}

// Accumulates `g` (output-shaped) into a possibly row-broadcast input slot.
void accumulate_broadcast(Tensor& slot, const Tensor& g, bool reduce_rows) {
  if (!reduce_rows) {
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
    return;
  }
  const std::size_t rows = g.rows();
  const std::size_t cols = g.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = g.raw() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) slot[c] += src[c];
  }
}

template <typename F>
Tensor binary(const Tensor& a, const Tensor& b, Broadcast kind,
              const std::vector<std::size_t>& shape, F f) {
  Tensor out(shape);
  const std::size_t cols = out.cols();
  const std::size_t n = out.size();
  switch (kind) {
    case Broadcast::kNone:
      for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
      break;
    case Broadcast::kSecondRow:
      for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i % cols]);
      break;
    case Broadcast::kFirstRow:
      for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i % cols], b[i]);
      break;
  }
  return out;
}

template <typename F>
Tensor unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw Error("Var is not attached to a tape");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw Error("Vars belong to different tapes");
  return tape_of(a);
}

}  // namespace

// ---- Tensor --------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() <= 1) return 1;
  if (rank() == 2) return shape_[0];
  throw ShapeMismatch("rank " + std::to_string(rank()) + " tensor has no 2-d view");
}

std::size_t Tensor::cols() const {
  if (rank() == 0) return 1;
  if (rank() == 1) return shape_[0];
  if (rank() == 2) return shape_[1];
  throw ShapeMismatch("rank " + std::to_string(rank()) + " tensor has no 2-d view");
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw NonScalarOutput("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---- Tape ----------------------------------------------------------------

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kNeg: return "neg";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSquare: return "square";
    case OpKind::kClamp: return "clamp";
    case OpKind::kRelu: return "relu";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_of(*this).value(id); }

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external != nullptr ? *n.external : n.value;
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) {
    throw NonFiniteValue("constant input at node " + std::to_string(nodes_.size()) +
                         " holds a non-finite value");
  }
  Node n;
  n.op = OpKind::kConstant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(const Tensor& param, bool trainable) {
  if (!param.all_finite()) {
    throw NonFiniteValue("leaf at node " + std::to_string(nodes_.size()) +
                         " holds a non-finite value");
  }
  Node n;
  n.op = OpKind::kLeaf;
  n.external = &param;
  n.needs_grad = trainable;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Var v = constant(std::move(value));
  nodes_[v.id].op = OpKind::kLeaf;
  nodes_[v.id].needs_grad = true;
  return v;
}

Var Tape::record(OpKind op, Tensor value, std::vector<std::size_t> inputs, double p0, double p1) {
  const std::size_t id = nodes_.size();
  if (!value.all_finite()) {
    throw NonFiniteValue(std::string(op_name(op)) + " produced a non-finite value at node " +
                         std::to_string(id));
  }
  Node n;
  n.op = op;
  n.p0 = p0;
  n.p1 = p1;
  n.value = std::move(value);
  for (std::size_t in : inputs) n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var{this, id};
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad_live) {
    const Tensor& v = value(id);
    if (n.grad.shape() == v.shape()) {
      std::fill(n.grad.data().begin(), n.grad.data().end(), 0.0);
    } else {
      n.grad = Tensor::zeros_like(v);
    }
    n.grad_live = true;
  }
  return n.grad;
}

void Tape::backward(Var output) {
  if (output.tape != this) throw Error("backward: output belongs to another tape");
  if (value(output.id).size() != 1) {
    throw NonScalarOutput("backward requires a scalar output, got " +
                          std::to_string(value(output.id).size()) + " elements");
  }
  for (Node& n : nodes_) n.grad_live = false;
  has_backward_ = true;
  if (!nodes_[output.id].needs_grad) return;
  grad_slot(output.id)[0] = 1.0;
  for (std::size_t id = output.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.grad_live || n.inputs.empty()) continue;
    propagate(id);
  }
  for (std::size_t id = 0; id <= output.id; ++id) {
    const Node& n = nodes_[id];
    if (n.op == OpKind::kLeaf && n.grad_live && !n.grad.all_finite()) {
      throw NonFiniteValue("backward produced a non-finite gradient for leaf node " +
                           std::to_string(id));
    }
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (!has_backward_ || !n.grad_live) return Tensor::zeros_like(value(v.id));
  return n.grad;
}

void Tape::propagate(std::size_t id) {
  // Copy what we need: grad_slot() may reallocate nothing, but inputs' slots
  // are distinct nodes so references into nodes_ stay valid (no push_back here).
  const Node& n = nodes_[id];
  const Tensor& g = n.grad;
  const Tensor& out = n.value;
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };

  switch (n.op) {
    case OpKind::kConstant:
    case OpKind::kLeaf:
      break;
    case OpKind::kMatmul: {
      const Tensor& a = value(n.inputs[0]);
      const Tensor& b = value(n.inputs[1]);
      if (wants(0)) view(grad_slot(n.inputs[0])).noalias() += view(g) * view(b).transpose();
      if (wants(1)) view(grad_slot(n.inputs[1])).noalias() += view(a).transpose() * view(g);
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub: {
      const double sign = n.op == OpKind::kSub ? -1.0 : 1.0;
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        Tensor& slot = grad_slot(n.inputs[k]);
        const bool reduce = slot.size() != g.size();
        if (k == 1 && sign < 0) {
          Tensor neg_g = unary(g, [](double x) { return -x; });
          accumulate_broadcast(slot, neg_g, reduce);
        } else {
          accumulate_broadcast(slot, g, reduce);
        }
      }
      break;
    }
    case OpKind::kMul: {
      const Tensor& a = value(n.inputs[0]);
      const Tensor& b = value(n.inputs[1]);
      const std::size_t cols = g.cols();
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        const Tensor& self = k == 0 ? a : b;
        const Tensor& other = k == 0 ? b : a;
        const bool other_bcast = other.size() != g.size();
        Tensor local(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
          local[i] = g[i] * other[other_bcast ? i % cols : i];
        }
        Tensor& slot = grad_slot(n.inputs[k]);
        accumulate_broadcast(slot, local, self.size() != g.size());
      }
      break;
    }
    case OpKind::kNeg: {
      Tensor& slot = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] -= g[i];
      break;
    }
    case OpKind::kScale: {
      Tensor& slot = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += n.p0 * g[i];
      break;
    }
    case OpKind::kAddScalar: {
      Tensor& slot = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
      break;
    }
    case OpKind::kExp: {
      Tensor& slot = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i] * out[i];
      break;
    }
    case OpKind::kLog: {
      const Tensor& a = value(n.inputs[0]);
      Tensor& slot = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i] / a[i];
      break;
    }
    case OpKind::kSquare: {
      const Tensor& a = value(n.inputs[0]);
      Tensor& slot = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += 2.0 * a[i] * g[i];
      break;
    }
    case OpKind::kClamp: {
      const Tensor& a = value(n.inputs[0]);
      Tensor& slot = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a[i] >= n.p0 && a[i] <= n.p1) slot[i] += g[i];
      }
      break;
    }
    case OpKind::kRelu: {
      const Tensor& a = value(n.inputs[0]);
      Tensor& slot = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a[i] > 0.0) slot[i] += g[i];
      }
      break;
    }
    case OpKind::kLeakyRelu: {
      const Tensor& a = value(n.inputs[0]);
      Tensor& slot = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) slot[i] += a[i] > 0.0 ? g[i] : n.p0 * g[i];
      break;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      Tensor& slot = grad_slot(n.inputs[0]);
      const double d = n.op == OpKind::kMean ? g[0] / static_cast<double>(slot.size()) : g[0];
      for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += d;
      break;
    }
    case OpKind::kRowSum: {
      Tensor& slot = grad_slot(n.inputs[0]);
      const std::size_t cols = slot.cols();
      for (std::size_t r = 0; r < slot.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) slot[r * cols + c] += g[r];
      }
      break;
    }
    case OpKind::kConcat: {
      const std::size_t rows = g.rows();
      const std::size_t total = g.cols();
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t w = value(n.inputs[k]).cols();
        if (wants(k)) {
          Tensor& slot = grad_slot(n.inputs[k]);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < w; ++c) slot[r * w + c] += g[r * total + offset + c];
          }
        }
        offset += w;
      }
      break;
    }
    case OpKind::kSlice: {
      Tensor& slot = grad_slot(n.inputs[0]);
      const std::size_t begin = static_cast<std::size_t>(n.p0);
      const std::size_t w = g.cols();
      const std::size_t src_cols = slot.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < w; ++c) slot[r * src_cols + begin + c] += g[r * w + c];
      }
      break;
    }
  }
}

// ---- ops -----------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() > 2 || bv.rank() > 2 || av.cols() != bv.rows()) {
    throw ShapeMismatch("matmul: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  view(out).noalias() = view(av) * view(bv);
  return t.record(OpKind::kMatmul, std::move(out), {a.id, b.id});
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  std::vector<std::size_t> shape;
  const Broadcast k = broadcast_kind(a.value(), b.value(), "add", shape);
  return t.record(OpKind::kAdd,
                  binary(a.value(), b.value(), k, shape, [](double x, double y) { return x + y; }),
                  {a.id, b.id});
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  std::vector<std::size_t> shape;
  const Broadcast k = broadcast_kind(a.value(), b.value(), "sub", shape);
  return t.record(OpKind::kSub,
                  binary(a.value(), b.value(), k, shape, [](double x, double y) { return x - y; }),
                  {a.id, b.id});
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  std::vector<std::size_t> shape;
  const Broadcast k = broadcast_kind(a.value(), b.value(), "mul", shape);
  return t.record(OpKind::kMul,
                  binary(a.value(), b.value(), k, shape, [](double x, double y) { return x * y; }),
                  {a.id, b.id});
}

Var neg(Var a) {
  return tape_of(a).record(OpKind::kNeg, unary(a.value(), [](double x) { return -x; }), {a.id});
}

Var scale(Var a, double factor) {
  return tape_of(a).record(OpKind::kScale,
                           unary(a.value(), [factor](double x) { return factor * x; }), {a.id},
                           factor);
}

Var add_scalar(Var a, double offset) {
  return tape_of(a).record(OpKind::kAddScalar,
                           unary(a.value(), [offset](double x) { return x + offset; }), {a.id},
                           offset);
}

Var exp(Var a) {
  return tape_of(a).record(OpKind::kExp, unary(a.value(), [](double x) { return std::exp(x); }),
                           {a.id});
}

Var log(Var a) {
  return tape_of(a).record(OpKind::kLog, unary(a.value(), [](double x) { return std::log(x); }),
                           {a.id});
}

Var square(Var a) {
  return tape_of(a).record(OpKind::kSquare, unary(a.value(), [](double x) { return x * x; }),
                           {a.id});
}

Var clamp(Var a, double lo, double hi) {
  return tape_of(a).record(OpKind::kClamp,
                           unary(a.value(), [lo, hi](double x) { return std::clamp(x, lo, hi); }),
                           {a.id}, lo, hi);
}

Var relu(Var a) {
  return tape_of(a).record(OpKind::kRelu,
                           unary(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {a.id});
}

Var leaky_relu(Var a, double slope) {
  return tape_of(a).record(OpKind::kLeakyRelu,
                           unary(a.value(), [slope](double x) { return x > 0.0 ? x : slope * x; }),
                           {a.id}, slope);
}

Var sum(Var a) {
  const auto d = a.value().data();
  return tape_of(a).record(OpKind::kSum, Tensor::scalar(std::accumulate(d.begin(), d.end(), 0.0)),
                           {a.id});
}

Var mean(Var a) {
  const auto d = a.value().data();
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  return tape_of(a).record(OpKind::kMean, Tensor::scalar(total / static_cast<double>(d.size())),
                           {a.id});
}

Var row_sum(Var a) {
  const Tensor& v = a.value();
  const std::size_t rows = v.rows();
  const std::size_t cols = v.cols();
  Tensor out({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += v[r * cols + c];
    out[r] = s;
  }
  return tape_of(a).record(OpKind::kRowSum, std::move(out), {a.id});
}

Var concat(std::initializer_list<Var> parts) { return concat(std::vector<Var>(parts)); }

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t rows = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    tape_of(p, parts.front());
    if (p.value().rank() > 2 || p.value().rows() != rows) {
      throw ShapeMismatch("concat: row count mismatch (" + shape_str(p.value().shape()) + ")");
    }
    total += p.value().cols();
    ids.push_back(p.id);
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    const std::size_t w = v.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.raw() + r * w, w, out.raw() + r * total + offset);
    }
    offset += w;
  }
  return t.record(OpKind::kConcat, std::move(out), std::move(ids));
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  const Tensor& v = a.value();
  if (v.rank() > 2 || begin >= end || end > v.cols()) {
    throw ShapeMismatch("slice: [" + std::to_string(begin) + "," + std::to_string(end) +
                        ") out of range for " + shape_str(v.shape()));
  }
  const std::size_t rows = v.rows();
  const std::size_t w = end - begin;
  Tensor out({rows, w});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(v.raw() + r * v.cols() + begin, w, out.raw() + r * w);
  }
  return tape_of(a).record(OpKind::kSlice, std::move(out), {a.id}, static_cast<double>(begin),
                           static_cast<double>(end));
}

// ---- grad_check ----------------------------------------------------------

double grad_check(const LossBuilder& loss_fn, std::vector<Tensor> params, double h) {
  if (!(h > 0.0)) throw Error("grad_check: step must be positive");

  auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(tape.leaf(p, true));
    Var loss = loss_fn(tape, vars);
    const double value = loss.item();
    if (with_grad) {
      tape.backward(loss);
      for (Var v : vars) grads->push_back(tape.grad(v));
    }
    return value;
  };

  std::vector<Tensor> analytic;
  evaluate(true, &analytic);

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double saved = params[k][i];
      params[k][i] = saved + h;
      const double up = evaluate(false, nullptr);
      params[k][i] = saved - h;
      const double down = evaluate(false, nullptr);
      params[k][i] = saved;
      const double fd = (up - down) / (2.0 * h);
      if (!std::isfinite(fd)) throw NonFiniteValue("grad_check: non-finite central difference");
      const double err = std::abs(analytic[k][i] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace wyner
