#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gpig/error.hpp"

namespace gpig {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_inf(const Vec& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec hadamard(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw DimensionError("hadamard: length " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  Vec r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
  return r;
}

inline Vec vec_sub(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw DimensionError("vec_sub: length " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  Vec r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

// Dense row-major matrix; desk-scale sizes only.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows),
        cols_(cols),
        data_(static_cast<size_t>(rows < 0 ? 0 : rows) *
                  static_cast<size_t>(cols < 0 ? 0 : cols),
              fill) {
    if (rows < 0 || cols < 0) throw DimensionError("negative matrix dimension");
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(int i, int j) {
    return data_[static_cast<size_t>(i) * cols_ + j];
  }
  double operator()(int i, int j) const {
    return data_[static_cast<size_t>(i) * cols_ + j];
  }

  const double* row_ptr(int i) const {
    return data_.data() + static_cast<size_t>(i) * cols_;
  }
  double* row_ptr(int i) {
    return data_.data() + static_cast<size_t>(i) * cols_;
  }

  Vec row(int i) const {
    return Vec(row_ptr(i), row_ptr(i) + cols_);
  }
  Vec col(int j) const {
    Vec c(rows_);
    for (int i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  Matrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      double* crow = c.row_ptr(i);
      for (int j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline Vec matvec(const Matrix& a, const Vec& x) {
  if (a.cols() != static_cast<int>(x.size()))
    throw DimensionError("matvec: matrix cols " + std::to_string(a.cols()) +
                         " vs vector length " + std::to_string(x.size()));
  Vec y(a.rows(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    const double* row = a.row_ptr(i);
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += row[j] * x[j];
    y[i] = s;
  }
  return y;
}

// y = A^T x without forming the transpose.
inline Vec matvec_transposed(const Matrix& a, const Vec& x) {
  if (a.rows() != static_cast<int>(x.size()))
    throw DimensionError("matvec_transposed: matrix rows " +
                         std::to_string(a.rows()) + " vs vector length " +
                         std::to_string(x.size()));
  Vec y(a.cols(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    const double* row = a.row_ptr(i);
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (int j = 0; j < a.cols(); ++j) y[j] += row[j] * xi;
  }
  return y;
}

inline Matrix gram(const Matrix& a) {
  Matrix g(a.cols(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const double* row = a.row_ptr(i);
    for (int p = 0; p < a.cols(); ++p) {
      const double rp = row[p];
      if (rp == 0.0) continue;
      for (int q = 0; q < a.cols(); ++q) g(p, q) += rp * row[q];
    }
  }
  return g;
}

// Gaussian elimination with partial pivoting. Returns nullopt when a pivot
// collapses relative to the matrix scale.
inline std::optional<Vec> solve_linear(Matrix a, Vec b) {
  const int n = a.rows();
  if (a.cols() != n || static_cast<int>(b.size()) != n)
    throw DimensionError("solve_linear: need square system, got " +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " with rhs length " +
                         std::to_string(b.size()));
  if (n == 0) return Vec{};
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  const double tol = 1e-13 * (1.0 + scale);
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (std::abs(a(piv, col)) < tol) return std::nullopt;
    if (piv != col) {
      for (int j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
      std::swap(b[col], b[piv]);
    }
    const double d = a(col, col);
    for (int r = col + 1; r < n; ++r) {
      const double f = a(r, col) / d;
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j) a(r, j) -= f * a(col, j);
      b[r] -= f * b[col];
    }
  }
  Vec x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

}  // namespace gpig
