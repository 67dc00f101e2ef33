#pragma once

#include <cmath>
#include <optional>

#include "continsense/numkit/matrix.hpp"

namespace continsense::numkit {

// Lower-triangular Cholesky factor of a symmetric matrix, or nullopt when the
// matrix is not numerically positive definite.
inline std::optional<DenseMatrix> cholesky(const DenseMatrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("cholesky: matrix must be square, got " + a.shape());
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
  const double pivot_floor = 1e-12 * std::max(max_diag, 1e-300);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > pivot_floor)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

// Solves (L L^T) x = b for each column of b.
inline DenseMatrix cholesky_solve(const DenseMatrix& l, const DenseMatrix& b) {
  const std::size_t n = l.rows();
  if (b.rows() != n) throw DimensionError("cholesky_solve: rhs " + b.shape() + " vs factor " + l.shape());
  DenseMatrix x = b;
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x(k, c);
      x(ii, c) = s / l(ii, ii);
    }
  }
  return x;
}

}  // namespace continsense::numkit
