#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace stablehte {

// Dense row-major matrix of doubles. All numeric state in the library
// (parameters, activations, gradients) lives in these.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);  // zero-filled
  Matrix(int rows, int cols, std::vector<double> data);
  static Matrix constant(int rows, int cols, double value);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::span<const double> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int r) const { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }

  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  bool all_finite() const;
  void fill(double value);

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// c = a*b with optional transposition of either operand. Plain loops in a
// fixed order, so results are bit-reproducible across runs on the same
// platform. Throws DimensionError on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b, bool trans_a = false, bool trans_b = false);

Matrix transpose(const Matrix& a);

// Sum of all entries, left-to-right in storage order.
double sum(const Matrix& a);

}  // namespace stablehte
