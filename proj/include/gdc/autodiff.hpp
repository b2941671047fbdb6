#pragma once

// Matrix-level reverse-mode automatic differentiation.
//
// A Tape owns every intermediate value created during one forward pass. Ops
// evaluate eagerly and register a backward closure; Tape::backward walks the
// nodes in reverse creation order. Nodes only propagate gradient when at least
// one input requires it, so constant inputs cost nothing in the backward pass.

#include "gdc/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace gdc::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr; }
  const Matrix& value() const;
  const Matrix& grad() const;
  long rows() const { return value().rows(); }
  long cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, {}); }
  Var parameter(Matrix value) { return push(std::move(value), true, {}); }

  const Matrix& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  // Gradient of the last backward() target; zero matrix if the node was unreached.
  const Matrix& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  // Accumulates into the gradient of node `id` when it requires gradient.
  template <class Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  Matrix* grad_slot(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return nullptr;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return &n.grad;
  }

  using Backprop = std::function<void(Tape&, const Matrix& out_grad)>;

  Var record(Matrix value, std::initializer_list<Var> inputs, Backprop backprop) {
    bool rg = false;
    for (const Var& v : inputs) rg = rg || requires_grad(v.id);
    return push(std::move(value), rg, rg ? std::move(backprop) : Backprop{});
  }

  void backward(Var target) {
    if (target.rows() != 1 || target.cols() != 1) throw ArgumentError("backward target must be a scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    Node& t = nodes_[static_cast<size_t>(target.id)];
    if (!t.requires_grad) return;
    t.grad = Matrix::Ones(1, 1);
    for (int id = target.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.backprop && n.grad.size() != 0) n.backprop(*this, n.grad);
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backprop backprop;
  };

  Var push(Matrix value, bool rg, Backprop bp) {
    nodes_.push_back(Node{std::move(value), Matrix(), rg, std::move(bp)});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }
inline const Matrix& Var::grad() const { return tape->grad(id); }

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

// ---- linear algebra -------------------------------------------------------

inline Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw ValidationError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                          std::to_string(b.rows()) + " differ");
  }
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

inline Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

inline Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

inline Var scale(Var a, double c) {
  const int ia = a.id;
  return a.tape->record(a.value() * c, {a}, [ia, c](Tape& t, const Matrix& g) { t.accumulate(ia, g * c); });
}

// a (n x k) plus a row vector b (1 x k) broadcast over rows.
inline Var add_row(Var a, Var b) {
  if (b.rows() != 1 || b.cols() != a.cols()) throw ValidationError("add_row: bias shape mismatch");
  const int ia = a.id, ib = b.id;
  Matrix out = a.value().rowwise() + b.value().row(0);
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
  });
}

inline Var hadamard(Var a, Var b) {
  check_same_shape(a, b, "hadamard");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

inline Var hcat(Var a, Var b) {
  if (a.rows() != b.rows()) throw ValidationError("hcat: row counts differ");
  const int ia = a.id, ib = b.id;
  const long ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  out << a.value(), b.value();
  return a.tape->record(std::move(out), {a, b}, [ia, ib, ca, cb](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.leftCols(ca));
    if (t.requires_grad(ib)) t.accumulate(ib, g.rightCols(cb));
  });
}

// Copy of the value with no gradient path back to `a`.
inline Var detach(Var a) { return a.tape->constant(a.value()); }

// ---- elementwise nonlinearities -------------------------------------------

inline Var relu(Var a) {
  const int ia = a.id;
  return a.tape->record(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct((t.value(ia).array() > 0.0).cast<double>().matrix()));
  });
}

inline Var elu(Var a) {
  const int ia = a.id;
  Matrix out = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, const Matrix& g) {
    Matrix d = t.value(ia).unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  const int ia = a.id;
  Matrix out = a.value().unaryExpr(&sigmoid_scalar);
  Matrix deriv = out.cwiseProduct((1.0 - out.array()).matrix());
  return a.tape->record(std::move(out), {a}, [ia, deriv = std::move(deriv)](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(deriv));
  });
}

inline Var tanh(Var a) {
  const int ia = a.id;
  Matrix out = a.value().array().tanh().matrix();
  Matrix deriv = (1.0 - out.array().square()).matrix();
  return a.tape->record(std::move(out), {a}, [ia, deriv = std::move(deriv)](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(deriv));
  });
}

inline Var neg(Var a) { return scale(a, -1.0); }

// ---- row selection ----------------------------------------------------------

inline Var gather_rows(Var a, const Index& rows) {
  const int ia = a.id;
  Matrix out(static_cast<long>(rows.size()), a.cols());
  for (size_t r = 0; r < rows.size(); ++r) out.row(static_cast<long>(r)) = a.value().row(rows[r]);
  return a.tape->record(std::move(out), {a}, [ia, rows](Tape& t, const Matrix& g) {
    Matrix* slot = t.grad_slot(ia);
    for (size_t r = 0; r < rows.size(); ++r) slot->row(rows[r]) += g.row(static_cast<long>(r));
  });
}

// Zeroes rows where keep[i] is false.
inline Var mask_rows(Var a, const std::vector<bool>& keep) {
  if (static_cast<long>(keep.size()) != a.rows()) throw ValidationError("mask_rows: length mismatch");
  const int ia = a.id;
  Matrix out = a.value();
  for (long i = 0; i < out.rows(); ++i)
    if (!keep[static_cast<size_t>(i)]) out.row(i).setZero();
  return a.tape->record(std::move(out), {a}, [ia, keep](Tape& t, const Matrix& g) {
    Matrix masked = g;
    for (long i = 0; i < masked.rows(); ++i)
      if (!keep[static_cast<size_t>(i)]) masked.row(i).setZero();
    t.accumulate(ia, masked);
  });
}

// Row i taken from `when_true` if cond[i] != 0, else from `when_false`.
inline Var select_rows(const std::vector<int>& cond, Var when_true, Var when_false) {
  check_same_shape(when_true, when_false, "select_rows");
  if (static_cast<long>(cond.size()) != when_true.rows()) throw ValidationError("select_rows: length mismatch");
  const int it = when_true.id, iff = when_false.id;
  Matrix out(when_true.rows(), when_true.cols());
  for (long i = 0; i < out.rows(); ++i)
    out.row(i) = cond[static_cast<size_t>(i)] ? when_true.value().row(i) : when_false.value().row(i);
  return when_true.tape->record(std::move(out), {when_true, when_false}, [it, iff, cond](Tape& t, const Matrix& g) {
    Matrix* gt = t.grad_slot(it);
    Matrix* gf = t.grad_slot(iff);
    for (long i = 0; i < g.rows(); ++i) {
      Matrix* dst = cond[static_cast<size_t>(i)] ? gt : gf;
      if (dst) dst->row(i) += g.row(i);
    }
  });
}

// ---- reductions and losses --------------------------------------------------

inline Var sum_all(Var a) {
  const int ia = a.id;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const long r = a.rows(), c = a.cols();
  return a.tape->record(std::move(out), {a}, [ia, r, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

// Mean over the listed rows of the per-row mean squared difference.
inline Var mse_rows(Var a, Var b, const Index& rows) {
  check_same_shape(a, b, "mse_rows");
  Matrix out = Matrix::Zero(1, 1);
  if (rows.empty() || a.cols() == 0) return a.tape->record(std::move(out), {a, b}, {});
  const double denom = static_cast<double>(rows.size()) * static_cast<double>(a.cols());
  double total = 0.0;
  for (int r : rows) total += (a.value().row(r) - b.value().row(r)).squaredNorm();
  out(0, 0) = total / denom;
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b}, [ia, ib, rows, denom](Tape& t, const Matrix& g) {
    Matrix* ga = t.grad_slot(ia);
    Matrix* gb = t.grad_slot(ib);
    const double s = 2.0 * g(0, 0) / denom;
    for (int r : rows) {
      const Eigen::RowVectorXd diff = s * (t.value(ia).row(r) - t.value(ib).row(r));
      if (ga) ga->row(r) += diff;
      if (gb) gb->row(r) -= diff;
    }
  });
}

inline constexpr double kProbabilityClamp = 1e-7;

// Mean binary cross-entropy of probabilities p (n x 1) against binary labels over `rows`.
inline Var binary_cross_entropy(Var p, const std::vector<int>& labels, const Index& rows) {
  if (p.cols() != 1 || p.rows() != static_cast<long>(labels.size())) throw ValidationError("bce: shape mismatch");
  Matrix out = Matrix::Zero(1, 1);
  if (rows.empty()) return p.tape->record(std::move(out), {p}, {});
  const double n = static_cast<double>(rows.size());
  double total = 0.0;
  for (int r : rows) {
    const double q = std::clamp(p.value()(r, 0), kProbabilityClamp, 1.0 - kProbabilityClamp);
    total -= labels[static_cast<size_t>(r)] ? std::log(q) : std::log(1.0 - q);
  }
  out(0, 0) = total / n;
  const int ip = p.id;
  return p.tape->record(std::move(out), {p}, [ip, labels, rows, n](Tape& t, const Matrix& g) {
    Matrix* gp = t.grad_slot(ip);
    for (int r : rows) {
      const double raw = t.value(ip)(r, 0);
      if (raw < kProbabilityClamp || raw > 1.0 - kProbabilityClamp) continue;
      const double d = labels[static_cast<size_t>(r)] ? -1.0 / raw : 1.0 / (1.0 - raw);
      (*gp)(r, 0) += g(0, 0) * d / n;
    }
  });
}

}  // namespace gdc::ad
