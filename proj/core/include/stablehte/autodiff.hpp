#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "stablehte/matrix.hpp"

namespace stablehte::ad {

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,        // elementwise
  Square,     // elementwise
  Scale,      // multiply by a compile-time scalar
  RowMean,    // n x m -> n x 1
  ColMean,    // n x m -> 1 x m
  Sum,        // n x m -> 1 x 1
  Cos,
  Elu,        // alpha = 1
  Sigmoid,
  Softplus,
  Exp,
  Log,
  ConcatCols,
  SelectRows,
};

class Tape;

// Handle into a tape. Cheap to copy; values and gradients live on the tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  // Accumulated gradient. Zero-shaped until a backward pass touches it.
  const Matrix& grad() const;
  int rows() const;
  int cols() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Eagerly evaluated computation tape for reverse-mode differentiation.
// Build a scalar loss out of the ops below, call backward on it, then read
// gradients off the leaves. Gradients accumulate across backward calls until
// zero_grad. Leaves can be rebound with set_leaf + recompute, which re-runs
// the recorded program on the new inputs.
class Tape {
 public:
  Var leaf(Matrix value, std::string name = "");
  Var constant(Matrix value);
  Var constant(double scalar);  // 1 x 1

  void set_leaf(Var v, const Matrix& value);  // shape must match
  void backward(Var output);                  // output must be 1 x 1
  void zero_grad();
  void recompute();  // re-evaluate every non-leaf node in order

  std::size_t size() const { return nodes_.size(); }
  const std::string& name(Var v) const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    double scalar = 0.0;
    bool trans_a = false;
    bool trans_b = false;
    std::vector<int> rows;  // SelectRows index mask
    bool needs_grad = false;
    std::string name;
  };

  std::deque<Node> nodes_;

  int push(Node node);
  Matrix eval(const Node& node) const;
  const Node& at(int id) const;
  void check_owns(Var v, const char* op) const;

  friend struct Var;
  friend Var matmul(Var a, Var b, bool trans_a, bool trans_b);
  friend Var add(Var a, Var b);
  friend Var sub(Var a, Var b);
  friend Var mul(Var a, Var b);
  friend Var square(Var a);
  friend Var scale(Var a, double c);
  friend Var row_mean(Var a);
  friend Var col_mean(Var a);
  friend Var sum(Var a);
  friend Var cos(Var a);
  friend Var elu(Var a);
  friend Var sigmoid(Var a);
  friend Var softplus(Var a);
  friend Var exp(Var a);
  friend Var log(Var a);
  friend Var concat_cols(Var a, Var b);
  friend Var select_rows(Var a, const std::vector<int>& rows);
};

Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var square(Var a);
Var scale(Var a, double c);
Var row_mean(Var a);
Var col_mean(Var a);
Var sum(Var a);
Var cos(Var a);
Var elu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var concat_cols(Var a, Var b);
Var select_rows(Var a, const std::vector<int>& rows);

// Scalar (not differentiated) versions of the nonlinearities, shared by the
// tape kernels and by plain-value code that wants identical rounding.
double sigmoid_value(double x);
double softplus_value(double x);
double elu_value(double x);

}  // namespace stablehte::ad
