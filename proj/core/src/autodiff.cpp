#include "stablehte/autodiff.hpp"

#include <cmath>
#include <string>

#include "stablehte/errors.hpp"

namespace stablehte::ad {

double sigmoid_value(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) {
  // log(1 + e^x) without overflow on either tail.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double elu_value(double x) { return x > 0.0 ? x : std::expm1(x); }

const Matrix& Var::value() const { return tape->at(id).value; }
const Matrix& Var::grad() const { return tape->at(id).grad; }
int Var::rows() const { return value().rows(); }
int Var::cols() const { return value().cols(); }

const Tape::Node& Tape::at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

const std::string& Tape::name(Var v) const { return at(v.id).name; }

void Tape::check_owns(Var v, const char* op) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw ContractError(std::string(op) + ": variable does not belong to this tape");
}

int Tape::push(Node node) {
  if (node.op != Op::Leaf && node.op != Op::Constant) node.value = eval(node);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(Matrix value, std::string name) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.needs_grad = true;
  n.name = std::move(name);
  return {this, push(std::move(n))};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return {this, push(std::move(n))};
}

Var Tape::constant(double scalar) { return constant(Matrix::constant(1, 1, scalar)); }

void Tape::set_leaf(Var v, const Matrix& value) {
  check_owns(v, "set_leaf");
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.op != Op::Leaf) throw ContractError("set_leaf: node is not a leaf");
  if (!n.value.same_shape(value)) throw DimensionError("set_leaf: shape mismatch");
  n.value = value;
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + " differ");
}

}  // namespace

Matrix Tape::eval(const Node& node) const {
  static const Matrix kEmpty;
  const Matrix& A = node.a >= 0 ? at(node.a).value : kEmpty;
  switch (node.op) {
    case Op::Leaf:
    case Op::Constant:
      return node.value;
    case Op::MatMul:
      return stablehte::matmul(A, at(node.b).value, node.trans_a, node.trans_b);
    case Op::Add: {
      const Matrix& B = at(node.b).value;
      check_same_shape(A, B, "add");
      Matrix out = A;
      auto d = out.data();
      auto bd = B.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += bd[i];
      return out;
    }
    case Op::Sub: {
      const Matrix& B = at(node.b).value;
      check_same_shape(A, B, "sub");
      Matrix out = A;
      auto d = out.data();
      auto bd = B.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= bd[i];
      return out;
    }
    case Op::Mul: {
      const Matrix& B = at(node.b).value;
      check_same_shape(A, B, "mul");
      Matrix out = A;
      auto d = out.data();
      auto bd = B.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= bd[i];
      return out;
    }
    case Op::Square: {
      Matrix out = A;
      for (double& v : out.data()) v *= v;
      return out;
    }
    case Op::Scale: {
      Matrix out = A;
      for (double& v : out.data()) v *= node.scalar;
      return out;
    }
    case Op::RowMean: {
      Matrix out(A.rows(), 1);
      for (int i = 0; i < A.rows(); ++i) {
        double acc = 0.0;
        for (double v : A.row(i)) acc += v;
        out(i, 0) = acc / A.cols();
      }
      return out;
    }
    case Op::ColMean: {
      Matrix out(1, A.cols());
      for (int i = 0; i < A.rows(); ++i) {
        auto r = A.row(i);
        for (int j = 0; j < A.cols(); ++j) out(0, j) += r[j];
      }
      for (double& v : out.data()) v /= A.rows();
      return out;
    }
    case Op::Sum: {
      double acc = 0.0;
      for (double v : A.data()) acc += v;
      return Matrix::constant(1, 1, acc);
    }
    case Op::Cos: {
      Matrix out = A;
      for (double& v : out.data()) v = std::cos(v);
      return out;
    }
    case Op::Elu: {
      Matrix out = A;
      for (double& v : out.data()) v = elu_value(v);
      return out;
    }
    case Op::Sigmoid: {
      Matrix out = A;
      for (double& v : out.data()) v = sigmoid_value(v);
      return out;
    }
    case Op::Softplus: {
      Matrix out = A;
      for (double& v : out.data()) v = softplus_value(v);
      return out;
    }
    case Op::Exp: {
      Matrix out = A;
      for (double& v : out.data()) {
        if (v > 709.0) throw DomainError("exp: argument " + std::to_string(v) + " overflows");
        v = std::exp(v);
      }
      return out;
    }
    case Op::Log: {
      Matrix out = A;
      for (double& v : out.data()) {
        if (v <= 0.0) throw DomainError("log: non-positive argument " + std::to_string(v));
        v = std::log(v);
      }
      return out;
    }
    case Op::ConcatCols: {
      const Matrix& B = at(node.b).value;
      if (A.rows() != B.rows()) throw DimensionError("concat_cols: row counts differ");
      Matrix out(A.rows(), A.cols() + B.cols());
      for (int i = 0; i < A.rows(); ++i) {
        auto dst = out.row(i);
        auto ra = A.row(i);
        auto rb = B.row(i);
        for (int j = 0; j < A.cols(); ++j) dst[j] = ra[j];
        for (int j = 0; j < B.cols(); ++j) dst[A.cols() + j] = rb[j];
      }
      return out;
    }
    case Op::SelectRows: {
      Matrix out(static_cast<int>(node.rows.size()), A.cols());
      for (std::size_t k = 0; k < node.rows.size(); ++k) {
        int src = node.rows[k];
        if (src < 0 || src >= A.rows())
          throw DimensionError("select_rows: index " + std::to_string(src) + " out of range");
        auto dst = out.row(static_cast<int>(k));
        auto srow = A.row(src);
        for (int j = 0; j < A.cols(); ++j) dst[j] = srow[j];
      }
      return out;
    }
  }
  throw ContractError("eval: unknown op");
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad = Matrix();
}

void Tape::recompute() {
  for (Node& n : nodes_) {
    if (n.op == Op::Leaf || n.op == Op::Constant) continue;
    n.value = eval(n);
  }
}

void Tape::backward(Var output) {
  check_owns(output, "backward");
  const Node& out = at(output.id);
  if (out.value.rows() != 1 || out.value.cols() != 1)
    throw ContractError("backward: output must be 1x1, got " + std::to_string(out.value.rows()) +
                        "x" + std::to_string(out.value.cols()));
  if (!out.needs_grad) {
    return;  // no leaf feeds this value; nothing to do
  }

  const int count = output.id + 1;
  std::vector<char> reach(static_cast<std::size_t>(count), 0);
  reach[static_cast<std::size_t>(output.id)] = 1;
  for (int id = output.id; id >= 0; --id) {
    if (!reach[static_cast<std::size_t>(id)]) continue;
    const Node& n = at(id);
    if (n.a >= 0) reach[static_cast<std::size_t>(n.a)] = 1;
    if (n.b >= 0) reach[static_cast<std::size_t>(n.b)] = 1;
  }

  // Local adjoints; flushed into persistent node gradients at the end so
  // repeated backward calls accumulate cleanly.
  std::vector<Matrix> adj(static_cast<std::size_t>(count));
  auto ensure = [&](int id) -> Matrix& {
    Matrix& g = adj[static_cast<std::size_t>(id)];
    if (g.empty() && !at(id).value.empty()) g = Matrix(at(id).value.rows(), at(id).value.cols());
    return g;
  };
  ensure(output.id)(0, 0) = 1.0;

  for (int id = output.id; id >= 0; --id) {
    const Node& n = at(id);
    if (!reach[static_cast<std::size_t>(id)] || !n.needs_grad) continue;
    if (n.op == Op::Leaf || n.op == Op::Constant) continue;
    const Matrix& g = adj[static_cast<std::size_t>(id)];
    if (g.empty()) continue;

    const bool want_a = n.a >= 0 && at(n.a).needs_grad;
    const bool want_b = n.b >= 0 && at(n.b).needs_grad;
    if (!want_a && !want_b) continue;
    const Matrix& A = at(n.a).value;

    switch (n.op) {
      case Op::MatMul: {
        const Matrix& B = at(n.b).value;
        if (want_a) {
          // d(A'B')/dA with A' = trans_a ? A^T : A.
          Matrix da = n.trans_a ? stablehte::matmul(B, g, n.trans_b, true)
                                : stablehte::matmul(g, B, false, !n.trans_b);
          Matrix& acc = ensure(n.a);
          auto d = acc.data();
          auto s = da.data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
        }
        if (want_b) {
          Matrix db = n.trans_b ? stablehte::matmul(g, A, true, n.trans_a)
                                : stablehte::matmul(A, g, !n.trans_a, false);
          Matrix& acc = ensure(n.b);
          auto d = acc.data();
          auto s = db.data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
        }
        break;
      }
      case Op::Add: {
        if (want_a) {
          auto d = ensure(n.a).data();
          auto s = g.data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
        }
        if (want_b) {
          auto d = ensure(n.b).data();
          auto s = g.data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
        }
        break;
      }
      case Op::Sub: {
        if (want_a) {
          auto d = ensure(n.a).data();
          auto s = g.data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
        }
        if (want_b) {
          auto d = ensure(n.b).data();
          auto s = g.data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
        }
        break;
      }
      case Op::Mul: {
        const Matrix& B = at(n.b).value;
        if (want_a) {
          auto d = ensure(n.a).data();
          auto s = g.data();
          auto o = B.data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] * o[i];
        }
        if (want_b) {
          auto d = ensure(n.b).data();
          auto s = g.data();
          auto o = A.data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] * o[i];
        }
        break;
      }
      case Op::Square: {
        auto d = ensure(n.a).data();
        auto s = g.data();
        auto a = A.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += 2.0 * s[i] * a[i];
        break;
      }
      case Op::Scale: {
        auto d = ensure(n.a).data();
        auto s = g.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += n.scalar * s[i];
        break;
      }
      case Op::RowMean: {
        Matrix& acc = ensure(n.a);
        const double inv = 1.0 / A.cols();
        for (int i = 0; i < A.rows(); ++i) {
          const double gi = g(i, 0) * inv;
          auto d = acc.row(i);
          for (int j = 0; j < A.cols(); ++j) d[j] += gi;
        }
        break;
      }
      case Op::ColMean: {
        Matrix& acc = ensure(n.a);
        const double inv = 1.0 / A.rows();
        for (int i = 0; i < A.rows(); ++i) {
          auto d = acc.row(i);
          for (int j = 0; j < A.cols(); ++j) d[j] += g(0, j) * inv;
        }
        break;
      }
      case Op::Sum: {
        auto d = ensure(n.a).data();
        const double gv = g(0, 0);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv;
        break;
      }
      case Op::Cos: {
        auto d = ensure(n.a).data();
        auto s = g.data();
        auto a = A.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i] * std::sin(a[i]);
        break;
      }
      case Op::Elu: {
        auto d = ensure(n.a).data();
        auto s = g.data();
        auto a = A.data();
        for (std::size_t i = 0; i < d.size(); ++i)
          d[i] += s[i] * (a[i] > 0.0 ? 1.0 : std::exp(a[i]));
        break;
      }
      case Op::Sigmoid: {
        auto d = ensure(n.a).data();
        auto s = g.data();
        auto v = n.value.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] * v[i] * (1.0 - v[i]);
        break;
      }
      case Op::Softplus: {
        auto d = ensure(n.a).data();
        auto s = g.data();
        auto a = A.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] * sigmoid_value(a[i]);
        break;
      }
      case Op::Exp: {
        auto d = ensure(n.a).data();
        auto s = g.data();
        auto v = n.value.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] * v[i];
        break;
      }
      case Op::Log: {
        auto d = ensure(n.a).data();
        auto s = g.data();
        auto a = A.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i] / a[i];
        break;
      }
      case Op::ConcatCols: {
        const Matrix& B = at(n.b).value;
        if (want_a) {
          Matrix& acc = ensure(n.a);
          for (int i = 0; i < A.rows(); ++i) {
            auto d = acc.row(i);
            auto s = g.row(i);
            for (int j = 0; j < A.cols(); ++j) d[j] += s[j];
          }
        }
        if (want_b) {
          Matrix& acc = ensure(n.b);
          for (int i = 0; i < B.rows(); ++i) {
            auto d = acc.row(i);
            auto s = g.row(i);
            for (int j = 0; j < B.cols(); ++j) d[j] += s[A.cols() + j];
          }
        }
        break;
      }
      case Op::SelectRows: {
        Matrix& acc = ensure(n.a);
        for (std::size_t k = 0; k < n.rows.size(); ++k) {
          auto d = acc.row(n.rows[k]);
          auto s = g.row(static_cast<int>(k));
          for (int j = 0; j < A.cols(); ++j) d[j] += s[j];
        }
        break;
      }
      case Op::Leaf:
      case Op::Constant:
        break;
    }
  }

  for (int id = 0; id < count; ++id) {
    const Matrix& g = adj[static_cast<std::size_t>(id)];
    if (g.empty()) continue;
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) continue;
    if (n.grad.empty()) n.grad = Matrix(g.rows(), g.cols());
    auto d = n.grad.data();
    auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  }
}

namespace {

Tape* common_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape)
    throw ContractError(std::string(op) + ": operands live on different tapes");
  return a.tape;
}

}  // namespace

#define STABLEHTE_UNARY(fn, opcode)                     \
  Var fn(Var a) {                                       \
    if (a.tape == nullptr) throw ContractError(#fn ": invalid operand"); \
    Tape::Node n;                                       \
    n.op = opcode;                                      \
    n.a = a.id;                                         \
    n.needs_grad = a.tape->at(a.id).needs_grad;         \
    return {a.tape, a.tape->push(std::move(n))};        \
  }

#define STABLEHTE_BINARY(fn, opcode)                    \
  Var fn(Var a, Var b) {                                \
    Tape* t = common_tape(a, b, #fn);                   \
    Tape::Node n;                                       \
    n.op = opcode;                                      \
    n.a = a.id;                                         \
    n.b = b.id;                                         \
    n.needs_grad = t->at(a.id).needs_grad || t->at(b.id).needs_grad; \
    return {t, t->push(std::move(n))};                  \
  }

STABLEHTE_BINARY(add, Op::Add)
STABLEHTE_BINARY(sub, Op::Sub)
STABLEHTE_BINARY(mul, Op::Mul)
STABLEHTE_BINARY(concat_cols, Op::ConcatCols)
STABLEHTE_UNARY(square, Op::Square)
STABLEHTE_UNARY(row_mean, Op::RowMean)
STABLEHTE_UNARY(col_mean, Op::ColMean)
STABLEHTE_UNARY(sum, Op::Sum)
STABLEHTE_UNARY(cos, Op::Cos)
STABLEHTE_UNARY(elu, Op::Elu)
STABLEHTE_UNARY(sigmoid, Op::Sigmoid)
STABLEHTE_UNARY(softplus, Op::Softplus)
STABLEHTE_UNARY(exp, Op::Exp)
STABLEHTE_UNARY(log, Op::Log)

#undef STABLEHTE_UNARY
#undef STABLEHTE_BINARY

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
  Tape* t = common_tape(a, b, "matmul");
  Tape::Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.needs_grad = t->at(a.id).needs_grad || t->at(b.id).needs_grad;
  return {t, t->push(std::move(n))};
}

Var scale(Var a, double c) {
  if (a.tape == nullptr) throw ContractError("scale: invalid operand");
  Tape::Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.scalar = c;
  n.needs_grad = a.tape->at(a.id).needs_grad;
  return {a.tape, a.tape->push(std::move(n))};
}

Var select_rows(Var a, const std::vector<int>& rows) {
  if (a.tape == nullptr) throw ContractError("select_rows: invalid operand");
  Tape::Node n;
  n.op = Op::SelectRows;
  n.a = a.id;
  n.rows = rows;
  n.needs_grad = a.tape->at(a.id).needs_grad;
  return {a.tape, a.tape->push(std::move(n))};
}

}  // namespace stablehte::ad
