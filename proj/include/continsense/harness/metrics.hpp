#pragma once

#include <cmath>

#include "continsense/errors.hpp"
#include "continsense/numkit/matrix.hpp"

namespace continsense::harness {

using numkit::DenseMatrix;

// Root mean squared difference over cells where eval_mask is 1.
inline double rmse(const DenseMatrix& estimate, const DenseMatrix& truth, const DenseMatrix& eval_mask) {
  numkit::require_same_shape(estimate, truth, "rmse");
  numkit::require_same_shape(estimate, eval_mask, "rmse");
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (eval_mask[i] != 1.0) continue;
    const double d = estimate[i] - truth[i];
    se += d * d;
    ++count;
  }
  if (count == 0) throw MetricError("rmse: evaluation mask selects no cells");
  return std::sqrt(se / static_cast<double>(count));
}

inline double rmse(const DenseMatrix& estimate, const DenseMatrix& truth) {
  numkit::require_same_shape(estimate, truth, "rmse");
  return rmse(estimate, truth, DenseMatrix(truth.rows(), truth.cols(), 1.0));
}

// Sum of absolute differences over every cell.
inline double epsilon_metric(const DenseMatrix& estimate, const DenseMatrix& truth) {
  numkit::require_same_shape(estimate, truth, "epsilon_metric");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += std::abs(estimate[i] - truth[i]);
  return s;
}

// Cells the sensing mask did not observe.
inline DenseMatrix unobserved(const DenseMatrix& mask) {
  DenseMatrix e(mask.rows(), mask.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) e[i] = mask[i] == 1.0 ? 0.0 : 1.0;
  return e;
}

}  // namespace continsense::harness
