// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dpgm/tensor.hpp"

namespace dpgm {

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  AddScalar,
  MatMul,
  Transpose,
  Tanh,
  Sigmoid,
  Softplus,
  Relu,
  Exp,
  Log,
  Square,
  Sqrt,
  LogSigmoid,
  Softmax,
  LogSoftmax,
  LogSumExp,
  Sum,
  Mean,
  SumLast,
  AddBias,
  MulRow,
  Concat,
  Slice,
  Reshape,
};

const char* op_name(Op op);

class Tape;

/// Non-tensor arguments of an op (scale factor, slice range, target shape).
struct OpAttr {
  double scalar = 0.0;
  std::size_t begin = 0;
  std::size_t end = 0;
  Shape shape;
};

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;

  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Records a computation in topological order and runs reverse-mode
/// differentiation over it. Single-threaded; a Tape must outlive its Vars.
///
/// Leaves are differentiable inputs; constants are not, and nothing that
/// depends only on constants is visited during backward.
class Tape {
 public:
  explicit Tape(bool check_finite = false) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);
  std::vector<Var> leaves(const std::vector<Tensor>& values);

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool check_finite() const { return check_finite_; }
  Op op(Var v) const { return nodes_.at(v.id()).op; }

  /// Overwrites a leaf or constant; call replay() to refresh dependents.
  void set_value(Var v, Tensor value);
  /// Re-evaluates every recorded op from the current leaf values.
  void replay();

  /// Seeds d(output) with `seed` and accumulates seed^T * d(output)/d(node)
  /// into every node that depends on a leaf. Clears gradients from earlier
  /// backward calls first.
  void backward(Var output, const Tensor& seed);
  void backward(Var scalar_output);

  /// Gradient of the last backward call; zeros if `v` was not reached.
  Tensor grad(Var v) const;
  std::vector<Tensor> grads(std::span<const Var> vars) const;

  // Used by the op functions below.
  using Attr = OpAttr;
  Var record(Op op, std::vector<std::uint32_t> inputs, Attr attr = {});
  Var check_same_tape(Var a) const;

 private:
  struct Node {
    Op op;
    bool requires_grad;
    std::vector<std::uint32_t> inputs;
    Attr attr;
    Tensor value;
  };

  Tensor evaluate(const Node& node) const;
  void propagate(std::uint32_t id);
  void accumulate(std::uint32_t id, const Tensor& g);
  Tensor& grad_slot(std::uint32_t id);
  void verify_finite(std::uint32_t id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
  bool check_finite_ = false;
};

// Elementwise binary ops; shapes must match exactly.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);
Var log_sigmoid(Var a);

// Last-axis reductions and normalisations.
Var softmax(Var a);
Var log_softmax(Var a);
Var logsumexp(Var a);
Var sum_last(Var a);

Var sum(Var a);
Var mean(Var a);

/// x[..., n] + b[n], the only broadcast besides mul_row.
Var add_bias(Var x, Var b);
/// x[..., n] * s[n].
Var mul_row(Var x, Var s);

Var concat(std::span<const Var> parts);
Var slice(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }
inline Var operator-(Var a, double c) { return add_scalar(a, -c); }

// Plain-tensor kernels shared with code that does not need a tape.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
double log_sum_exp(std::span<const double> values);
double softplus(double x);
double sigmoid(double x);
double log_sigmoid(double x);

}  // namespace dpgm
