// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgm/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dpgm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

Shape drop_last(const Shape& s) {
  if (s.empty()) return s;
  return Shape(s.begin(), s.end() - 1);
}

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " +
                   shape_string(a) + " and " + shape_string(b));
}

template <class F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

// tanh over a buffer using Eigen's vectorised exp: sign(x) (1 - e) / (1 + e)
// with e = exp(-2|x|), and a Taylor polynomial near zero where 1 - e cancels.
void tanh_kernel(std::span<const double> in, std::span<double> out) {
  const auto n = static_cast<Eigen::Index>(in.size());
  Eigen::Map<const Eigen::ArrayXd> x(in.data(), n);
  Eigen::Map<Eigen::ArrayXd> y(out.data(), n);
  const Eigen::ArrayXd e = (-2.0 * x.abs()).exp();
  const Eigen::ArrayXd x2 = x.square();
  y = (x.abs() < 0.02)
          .select(x * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 + x2 * (-17.0 / 315.0)))),
                  x.sign() * (1.0 - e) / (1.0 + e));
}

}  // namespace

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) { return -softplus(-x); }

double log_sum_exp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail(Op::MatMul, a.shape(), b.shape());
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  ConstMap A(a.data().data(), m, k);
  ConstMap B(b.data().data(), k, n);
  MutMap C(out.data().data(), m, n);
  C.noalias() = A * B;
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose: expected a matrix, got " + shape_string(a.shape()));
  }
  const auto m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Relu: return "relu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::LogSigmoid: return "log_sigmoid";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::LogSumExp: return "logsumexp";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SumLast: return "sum_last";
    case Op::AddBias: return "add_bias";
    case Op::MulRow: return "mul_row";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Reshape: return "reshape";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("var: not attached to a tape");
  return tape_->value(*this);
}

Var Tape::leaf(Tensor value) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{Op::Leaf, true, {}, {}, std::move(value)});
  verify_finite(id);
  return Var(this, id);
}

Var Tape::constant(Tensor value) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{Op::Constant, false, {}, {}, std::move(value)});
  verify_finite(id);
  return Var(this, id);
}

std::vector<Var> Tape::leaves(const std::vector<Tensor>& values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(leaf(v));
  return out;
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id()).value; }

Var Tape::check_same_tape(Var a) const {
  if (a.tape() != this) throw std::logic_error("tape: var belongs to another tape");
  return a;
}

void Tape::set_value(Var v, Tensor value) {
  check_same_tape(v);
  auto& node = nodes_.at(v.id());
  if (node.op != Op::Leaf && node.op != Op::Constant) {
    throw std::logic_error("tape: set_value on a computed node");
  }
  if (value.shape() != node.value.shape()) {
    throw ShapeError(std::string("set_value: ") + shape_string(node.value.shape()) +
                     " vs " + shape_string(value.shape()));
  }
  node.value = std::move(value);
}

void Tape::replay() {
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    auto& node = nodes_[i];
    if (node.op == Op::Leaf || node.op == Op::Constant) continue;
    node.value = evaluate(node);
    verify_finite(i);
  }
}

void Tape::verify_finite(std::uint32_t id) const {
  if (!check_finite_) return;
  const auto& node = nodes_[id];
  if (!node.value.all_finite()) {
    throw NumericalError("non-finite value at node " + std::to_string(id) + " (" +
                         op_name(node.op) + ")");
  }
}

Var Tape::record(Op op, std::vector<std::uint32_t> inputs, Attr attr) {
  bool rg = false;
  for (auto in : inputs) rg = rg || nodes_.at(in).requires_grad;
  Node node{op, rg, std::move(inputs), std::move(attr), Tensor()};
  node.value = evaluate(node);
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(std::move(node));
  verify_finite(id);
  return Var(this, id);
}

Tensor Tape::evaluate(const Node& node) const {
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.inputs[k]].value; };
  switch (node.op) {
    case Op::Leaf:
    case Op::Constant:
      return node.value;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape() != b.shape()) shape_fail(node.op, a.shape(), b.shape());
      Tensor out(a.shape());
      auto x = a.data(), y = b.data();
      auto o = out.data();
      switch (node.op) {
        case Op::Add: for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i]; break;
        case Op::Sub: for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i]; break;
        case Op::Mul: for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i]; break;
        default: for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] / y[i]; break;
      }
      return out;
    }
    case Op::Neg: return map_unary(in(0), [](double v) { return -v; });
    case Op::Scale: {
      const double c = node.attr.scalar;
      return map_unary(in(0), [c](double v) { return c * v; });
    }
    case Op::AddScalar: {
      const double c = node.attr.scalar;
      return map_unary(in(0), [c](double v) { return v + c; });
    }
    case Op::MatMul: return matmul(in(0), in(1));
    case Op::Transpose: return transpose(in(0));
    case Op::Tanh: {
      Tensor out(in(0).shape());
      tanh_kernel(in(0).data(), out.data());
      return out;
    }
    case Op::Sigmoid: return map_unary(in(0), [](double v) { return sigmoid(v); });
    case Op::Softplus: return map_unary(in(0), [](double v) { return softplus(v); });
    case Op::Relu: return map_unary(in(0), [](double v) { return v > 0.0 ? v : 0.0; });
    case Op::Exp: return map_unary(in(0), [](double v) { return std::exp(v); });
    case Op::Log: return map_unary(in(0), [](double v) { return std::log(v); });
    case Op::Square: return map_unary(in(0), [](double v) { return v * v; });
    case Op::Sqrt: return map_unary(in(0), [](double v) { return std::sqrt(v); });
    case Op::LogSigmoid: return map_unary(in(0), [](double v) { return log_sigmoid(v); });
    case Op::Softmax:
    case Op::LogSoftmax: {
      const Tensor& a = in(0);
      Tensor out(a.shape());
      const std::size_t n = last_dim(a.shape());
      const std::size_t rows = a.size() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        auto x = a.data().subspan(r * n, n);
        auto o = out.data().subspan(r * n, n);
        const double lse = log_sum_exp(x);
        if (node.op == Op::Softmax) {
          for (std::size_t j = 0; j < n; ++j) o[j] = std::exp(x[j] - lse);
        } else {
          for (std::size_t j = 0; j < n; ++j) o[j] = x[j] - lse;
        }
      }
      return out;
    }
    case Op::LogSumExp:
    case Op::SumLast: {
      const Tensor& a = in(0);
      const std::size_t n = last_dim(a.shape());
      const std::size_t rows = a.size() / n;
      Tensor out(drop_last(a.shape()));
      for (std::size_t r = 0; r < rows; ++r) {
        auto x = a.data().subspan(r * n, n);
        if (node.op == Op::LogSumExp) {
          out[r] = log_sum_exp(x);
        } else {
          double s = 0.0;
          for (double v : x) s += v;
          out[r] = s;
        }
      }
      return out;
    }
    case Op::Sum:
    case Op::Mean: {
      const Tensor& a = in(0);
      double s = 0.0;
      for (double v : a.data()) s += v;
      if (node.op == Op::Mean) s /= static_cast<double>(a.size());
      return Tensor::scalar(s);
    }
    case Op::AddBias:
    case Op::MulRow: {
      const Tensor& x = in(0);
      const Tensor& b = in(1);
      const std::size_t n = last_dim(x.shape());
      if (b.rank() != 1 || b.size() != n) shape_fail(node.op, x.shape(), b.shape());
      Tensor out(x.shape());
      auto xs = x.data();
      auto bs = b.data();
      auto o = out.data();
      const std::size_t rows = x.size() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
          o[r * n + j] = node.op == Op::AddBias ? xs[r * n + j] + bs[j] : xs[r * n + j] * bs[j];
        }
      }
      return out;
    }
    case Op::Concat: {
      const Shape lead = drop_last(in(0).shape());
      std::size_t total = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        if (drop_last(in(k).shape()) != lead || in(k).rank() == 0) {
          shape_fail(node.op, in(0).shape(), in(k).shape());
        }
        total += last_dim(in(k).shape());
      }
      Shape out_shape = lead;
      out_shape.push_back(total);
      Tensor out(out_shape);
      const std::size_t rows = out.size() / total;
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& part = in(k);
        const std::size_t n = last_dim(part.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(part.data().begin() + r * n, n, out.data().begin() + r * total + offset);
        }
        offset += n;
      }
      return out;
    }
    case Op::Slice: {
      const Tensor& a = in(0);
      const std::size_t n = last_dim(a.shape());
      const auto [b, e] = std::pair(node.attr.begin, node.attr.end);
      if (a.rank() == 0 || b >= e || e > n) {
        throw ShapeError("slice: range [" + std::to_string(b) + ", " + std::to_string(e) +
                         ") invalid for shape " + shape_string(a.shape()));
      }
      Shape out_shape = drop_last(a.shape());
      out_shape.push_back(e - b);
      Tensor out(out_shape);
      const std::size_t rows = a.size() / n;
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.data().begin() + r * n + b, e - b, out.data().begin() + r * (e - b));
      }
      return out;
    }
    case Op::Reshape: return in(0).reshaped(node.attr.shape);
  }
  throw std::logic_error("tape: unknown op");
}

Tensor& Tape::grad_slot(std::uint32_t id) {
  if (!has_grad_[id]) {
    grads_[id] = Tensor::zeros_like(nodes_[id].value);
    has_grad_[id] = true;
  }
  return grads_[id];
}

void Tape::accumulate(std::uint32_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  if (!has_grad_[id]) {
    grads_[id] = g;
    has_grad_[id] = true;
    return;
  }
  grads_[id] += g;
}

void Tape::backward(Var output, const Tensor& seed) {
  check_same_tape(output);
  const auto& out_node = nodes_.at(output.id());
  if (seed.shape() != out_node.value.shape()) {
    throw ShapeError("backward: seed shape " + shape_string(seed.shape()) +
                     " does not match output " + shape_string(out_node.value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), false);
  if (!out_node.requires_grad) return;
  grads_[output.id()] = seed;
  has_grad_[output.id()] = true;
  for (std::int64_t i = output.id(); i >= 0; --i) {
    const auto id = static_cast<std::uint32_t>(i);
    if (!has_grad_[id] || !nodes_[id].requires_grad) continue;
    propagate(id);
  }
}

void Tape::backward(Var scalar_output) {
  const Tensor& v = value(scalar_output);
  if (v.size() != 1) {
    throw ShapeError("backward: implicit seed needs a scalar output, got " +
                     shape_string(v.shape()));
  }
  backward(scalar_output, Tensor(v.shape(), 1.0));
}

Tensor Tape::grad(Var v) const {
  check_same_tape(v);
  const auto id = v.id();
  if (id < has_grad_.size() && has_grad_[id]) return grads_[id];
  return Tensor::zeros_like(nodes_.at(id).value);
}

std::vector<Tensor> Tape::grads(std::span<const Var> vars) const {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (auto v : vars) out.push_back(grad(v));
  return out;
}

void Tape::propagate(std::uint32_t id) {
  const Node& node = nodes_[id];
  const Tensor& g = grads_[id];
  const Tensor& y = node.value;
  auto in_id = [&](std::size_t k) { return node.inputs[k]; };
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.inputs[k]].value; };
  auto needs = [&](std::size_t k) { return nodes_[node.inputs[k]].requires_grad; };

  auto unary = [&](auto dfn) {
    if (!needs(0)) return;
    const Tensor& x = in(0);
    Tensor d(x.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * dfn(x[i], y[i]);
    accumulate(in_id(0), d);
  };

  switch (node.op) {
    case Op::Leaf:
    case Op::Constant:
      return;
    case Op::Add:
      accumulate(in_id(0), g);
      accumulate(in_id(1), g);
      return;
    case Op::Sub:
      accumulate(in_id(0), g);
      if (needs(1)) accumulate(in_id(1), -1.0 * g);
      return;
    case Op::Mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (needs(0)) {
        Tensor d(a.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * b[i];
        accumulate(in_id(0), d);
      }
      if (needs(1)) {
        Tensor d(b.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * a[i];
        accumulate(in_id(1), d);
      }
      return;
    }
    case Op::Div: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (needs(0)) {
        Tensor d(a.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] / b[i];
        accumulate(in_id(0), d);
      }
      if (needs(1)) {
        Tensor d(b.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = -g[i] * a[i] / (b[i] * b[i]);
        accumulate(in_id(1), d);
      }
      return;
    }
    case Op::Neg:
      if (needs(0)) accumulate(in_id(0), -1.0 * g);
      return;
    case Op::Scale:
      if (needs(0)) accumulate(in_id(0), node.attr.scalar * g);
      return;
    case Op::AddScalar:
    case Op::Reshape:
      if (needs(0)) accumulate(in_id(0), g.reshaped(in(0).shape()));
      return;
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
      ConstMap G(g.data().data(), m, n);
      if (needs(0)) {
        MutMap dA(grad_slot(in_id(0)).data().data(), m, k);
        dA.noalias() += G * ConstMap(b.data().data(), k, n).transpose();
      }
      if (needs(1)) {
        MutMap dB(grad_slot(in_id(1)).data().data(), k, n);
        dB.noalias() += ConstMap(a.data().data(), m, k).transpose() * G;
      }
      return;
    }
    case Op::Transpose:
      if (needs(0)) accumulate(in_id(0), transpose(g));
      return;
    case Op::Tanh:
      unary([](double, double t) { return 1.0 - t * t; });
      return;
    case Op::Sigmoid:
      unary([](double, double s) { return s * (1.0 - s); });
      return;
    case Op::Softplus:
      unary([](double x, double) { return sigmoid(x); });
      return;
    case Op::Relu:
      unary([](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
      return;
    case Op::Exp:
      unary([](double, double e) { return e; });
      return;
    case Op::Log:
      unary([](double x, double) { return 1.0 / x; });
      return;
    case Op::Square:
      unary([](double x, double) { return 2.0 * x; });
      return;
    case Op::Sqrt:
      unary([](double, double s) { return 0.5 / s; });
      return;
    case Op::LogSigmoid:
      unary([](double x, double) { return sigmoid(-x); });
      return;
    case Op::Softmax:
    case Op::LogSoftmax: {
      if (!needs(0)) return;
      const std::size_t n = last_dim(y.shape());
      const std::size_t rows = y.size() / n;
      Tensor d(y.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t o = r * n;
        if (node.op == Op::Softmax) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[o + j] * y[o + j];
          for (std::size_t j = 0; j < n; ++j) d[o + j] = y[o + j] * (g[o + j] - dot);
        } else {
          double gs = 0.0;
          for (std::size_t j = 0; j < n; ++j) gs += g[o + j];
          for (std::size_t j = 0; j < n; ++j) d[o + j] = g[o + j] - std::exp(y[o + j]) * gs;
        }
      }
      accumulate(in_id(0), d);
      return;
    }
    case Op::LogSumExp:
    case Op::SumLast: {
      if (!needs(0)) return;
      const Tensor& x = in(0);
      const std::size_t n = last_dim(x.shape());
      const std::size_t rows = x.size() / n;
      Tensor d(x.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
          d[r * n + j] = node.op == Op::SumLast ? g[r] : g[r] * std::exp(x[r * n + j] - y[r]);
        }
      }
      accumulate(in_id(0), d);
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      if (!needs(0)) return;
      const Tensor& x = in(0);
      double v = g[0];
      if (node.op == Op::Mean) v /= static_cast<double>(x.size());
      accumulate(in_id(0), Tensor(x.shape(), v));
      return;
    }
    case Op::AddBias:
    case Op::MulRow: {
      const Tensor& x = in(0);
      const Tensor& b = in(1);
      const std::size_t n = b.size();
      const std::size_t rows = x.size() / n;
      if (needs(0)) {
        if (node.op == Op::AddBias) {
          accumulate(in_id(0), g);
        } else {
          Tensor d(x.shape());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) d[r * n + j] = g[r * n + j] * b[j];
          accumulate(in_id(0), d);
        }
      }
      if (needs(1)) {
        Tensor d(b.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < n; ++j) {
            d[j] += node.op == Op::AddBias ? g[r * n + j] : g[r * n + j] * x[r * n + j];
          }
        }
        accumulate(in_id(1), d);
      }
      return;
    }
    case Op::Concat: {
      const std::size_t total = last_dim(y.shape());
      const std::size_t rows = y.size() / total;
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t n = last_dim(in(k).shape());
        if (needs(k)) {
          Tensor d(in(k).shape());
          for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(g.data().begin() + r * total + offset, n, d.data().begin() + r * n);
          }
          accumulate(in_id(k), d);
        }
        offset += n;
      }
      return;
    }
    case Op::Slice: {
      if (!needs(0)) return;
      const Tensor& x = in(0);
      const std::size_t n = last_dim(x.shape());
      const std::size_t w = node.attr.end - node.attr.begin;
      const std::size_t rows = x.size() / n;
      Tensor& d = grad_slot(in_id(0));
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < w; ++j) d[r * n + node.attr.begin + j] += g[r * w + j];
      }
      return;
    }
  }
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("op: invalid var");
  return *a.tape();
}

Var binary(Op op, Var a, Var b) {
  Tape& t = tape_of(a);
  t.check_same_tape(b);
  return t.record(op, {a.id(), b.id()});
}

Tape::Attr scalar_attr(double c) {
  Tape::Attr attr;
  attr.scalar = c;
  return attr;
}

Var unary(Op op, Var a, Tape::Attr attr = {}) {
  return tape_of(a).record(op, {a.id()}, std::move(attr));
}

}  // namespace

Var add(Var a, Var b) { return binary(Op::Add, a, b); }
Var sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var div(Var a, Var b) { return binary(Op::Div, a, b); }
Var neg(Var a) { return unary(Op::Neg, a); }
Var scale(Var a, double c) { return unary(Op::Scale, a, scalar_attr(c)); }
Var add_scalar(Var a, double c) { return unary(Op::AddScalar, a, scalar_attr(c)); }
Var matmul(Var a, Var b) { return binary(Op::MatMul, a, b); }
Var transpose(Var a) { return unary(Op::Transpose, a); }
Var tanh(Var a) { return unary(Op::Tanh, a); }
Var sigmoid(Var a) { return unary(Op::Sigmoid, a); }
Var softplus(Var a) { return unary(Op::Softplus, a); }
Var relu(Var a) { return unary(Op::Relu, a); }
Var exp(Var a) { return unary(Op::Exp, a); }
Var log(Var a) { return unary(Op::Log, a); }
Var square(Var a) { return unary(Op::Square, a); }
Var sqrt(Var a) { return unary(Op::Sqrt, a); }
Var log_sigmoid(Var a) { return unary(Op::LogSigmoid, a); }
Var softmax(Var a) { return unary(Op::Softmax, a); }
Var log_softmax(Var a) { return unary(Op::LogSoftmax, a); }
Var logsumexp(Var a) { return unary(Op::LogSumExp, a); }
Var sum_last(Var a) { return unary(Op::SumLast, a); }
Var sum(Var a) { return unary(Op::Sum, a); }
Var mean(Var a) { return unary(Op::Mean, a); }
Var add_bias(Var x, Var b) { return binary(Op::AddBias, x, b); }
Var mul_row(Var x, Var s) { return binary(Op::MulRow, x, s); }

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& t = tape_of(parts.front());
  std::vector<std::uint32_t> ids;
  ids.reserve(parts.size());
  for (auto p : parts) ids.push_back(t.check_same_tape(p).id());
  return t.record(Op::Concat, std::move(ids));
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  Tape::Attr attr;
  attr.begin = begin;
  attr.end = end;
  return unary(Op::Slice, a, std::move(attr));
}

Var reshape(Var a, Shape shape) {
  Tape::Attr attr;
  attr.shape = std::move(shape);
  return unary(Op::Reshape, a, std::move(attr));
}

}  // namespace dpgm
