#include "stablehte/matrix.hpp"

#include <cmath>
#include <cstddef>
#include <string>

#include "stablehte/errors.hpp"

namespace stablehte {

Matrix::Matrix(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
  if (rows < 0 || cols < 0) throw DimensionError("matrix dimensions must be non-negative");
}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 0 || cols < 0) throw DimensionError("matrix dimensions must be non-negative");
  if (data_.size() != static_cast<std::size_t>(rows) * cols)
    throw DimensionError("matrix data size does not match rows*cols");
}

Matrix Matrix::constant(int rows, int cols, double value) {
  Matrix m(rows, cols);
  m.fill(value);
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  int r = static_cast<int>(rows.size());
  int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
  Matrix m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c)
      throw DimensionError("from_rows: ragged row lengths");
    int j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  Matrix m(static_cast<int>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<int>(i), 0) = values[i];
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Matrix::fill(double value) {
  for (double& v : data_) v = value;
}

Matrix matmul(const Matrix& a, const Matrix& b, bool trans_a, bool trans_b) {
  const int m = trans_a ? a.cols() : a.rows();
  const int k = trans_a ? a.rows() : a.cols();
  const int kb = trans_b ? b.cols() : b.rows();
  const int n = trans_b ? b.rows() : b.cols();
  if (k != kb)
    throw DimensionError("matmul: inner dimensions differ (" + std::to_string(k) + " vs " +
                         std::to_string(kb) + ")");
  Matrix c(m, n);
  if (!trans_a && !trans_b) {
    // i-k-j order keeps the inner loop contiguous over b and c.
    for (int i = 0; i < m; ++i) {
      double* ci = c.row(i).data();
      for (int p = 0; p < k; ++p) {
        const double aip = a(i, p);
        if (aip == 0.0) continue;
        const double* bp = b.row(p).data();
        for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (int i = 0; i < m; ++i) {
      const double* ai = a.row(i).data();
      for (int j = 0; j < n; ++j) {
        const double* bj = b.row(j).data();
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
        c(i, j) = acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (int p = 0; p < k; ++p) {
      const double* ap = a.row(p).data();
      const double* bp = b.row(p).data();
      for (int i = 0; i < m; ++i) {
        const double api = ap[i];
        if (api == 0.0) continue;
        double* ci = c.row(i).data();
        for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
      }
    }
  } else {
    const double* bd = b.data().data();
    for (int i = 0; i < m; ++i) {
      double* ci = c.row(i).data();
      for (int p = 0; p < k; ++p) {
        const double aip = a(p, i);
        if (aip == 0.0) continue;
        for (int j = 0; j < n; ++j) ci[j] += aip * bd[static_cast<std::size_t>(j) * b.cols() + p];
      }
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double sum(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

}  // namespace stablehte
