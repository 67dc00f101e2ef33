#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "continsense/errors.hpp"
#include "continsense/numkit/matrix.hpp"

namespace continsense::dataio {

using numkit::DenseMatrix;

// Planar position of each subarea, indexed like matrix rows.
struct Coordinates {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t size() const noexcept { return x.size(); }
};

// One worker report: which subarea, when, and what was measured.
struct Submission {
  double time = 0.0;
  std::size_t subarea = 0;
  double value = 0.0;
};

// Sparse continuous-time instance: values N x M, binary mask N x M, and one
// strictly increasing timestamp per column. Cells with mask 0 hold a sentinel
// and must never be read.
struct ObservationSet {
  DenseMatrix values;
  DenseMatrix mask;
  std::vector<double> times;
  std::vector<std::string> area_ids;
  std::optional<Coordinates> coords;
  std::string name;
  std::string units;

  std::size_t n_subareas() const noexcept { return values.rows(); }
  std::size_t n_columns() const noexcept { return values.cols(); }
  bool observed(std::size_t i, std::size_t j) const { return mask(i, j) == 1.0; }

  std::size_t observed_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) n += mask[i] == 1.0 ? 1 : 0;
    return n;
  }

  double mean_gap() const {
    if (times.size() < 2) return 1.0;
    return (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  }
};

// Dense reference field aligned to `times`. `field`, when set, evaluates the
// noise-free generator at any (subarea, t).
struct GroundTruth {
  DenseMatrix values;
  std::vector<double> times;
  std::vector<std::string> area_ids;
  std::optional<Coordinates> coords;
  std::function<double(std::size_t, double)> field;
  std::string name;

  std::size_t n_subareas() const noexcept { return values.rows(); }
  std::size_t n_columns() const noexcept { return values.cols(); }
};

inline std::vector<std::string> default_area_ids(std::size_t n) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "a" + std::to_string(i);
  return ids;
}

inline void require_strictly_increasing(const std::vector<double>& times, const char* what) {
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (!std::isfinite(times[j])) throw InputError(std::string(what) + ": non-finite time at column " + std::to_string(j));
    if (j > 0 && !(times[j] > times[j - 1])) {
      throw InputError(std::string(what) + ": times not strictly increasing at column " + std::to_string(j));
    }
  }
}

// Checks the structural invariants. `continuous` additionally requires every
// column to carry at least one observation.
inline void validate(const ObservationSet& obs, bool continuous = false) {
  numkit::require_same_shape(obs.values, obs.mask, "ObservationSet");
  if (obs.times.size() != obs.n_columns()) {
    throw DimensionError("ObservationSet: " + std::to_string(obs.times.size()) + " times for " +
                         std::to_string(obs.n_columns()) + " columns");
  }
  require_strictly_increasing(obs.times, "ObservationSet");
  for (std::size_t i = 0; i < obs.mask.size(); ++i) {
    if (obs.mask[i] != 0.0 && obs.mask[i] != 1.0) throw InputError("ObservationSet: mask entries must be 0 or 1");
    if (obs.mask[i] == 1.0 && !std::isfinite(obs.values[i])) throw InputError("ObservationSet: non-finite observed value");
  }
  if (obs.coords && obs.coords->size() != obs.n_subareas()) {
    throw DimensionError("ObservationSet: coordinates for " + std::to_string(obs.coords->size()) + " areas, expected " +
                         std::to_string(obs.n_subareas()));
  }
  if (continuous) {
    for (std::size_t j = 0; j < obs.n_columns(); ++j) {
      bool any = false;
      for (std::size_t i = 0; i < obs.n_subareas() && !any; ++i) any = obs.observed(i, j);
      if (!any) throw InputError("ObservationSet: column " + std::to_string(j) + " has no observation");
    }
  }
}

// Sensing a ground truth through a mask: Y' = Y .* C, with 0 as the sentinel.
inline ObservationSet observe(const GroundTruth& gt, const DenseMatrix& mask) {
  numkit::require_same_shape(gt.values, mask, "observe");
  ObservationSet obs;
  obs.values = DenseMatrix(gt.n_subareas(), gt.n_columns());
  obs.mask = mask;
  for (std::size_t i = 0; i < mask.size(); ++i) obs.values[i] = mask[i] == 1.0 ? gt.values[i] : 0.0;
  obs.times = gt.times;
  obs.area_ids = gt.area_ids.empty() ? default_area_ids(gt.n_subareas()) : gt.area_ids;
  obs.coords = gt.coords;
  obs.name = gt.name;
  return obs;
}

}  // namespace continsense::dataio
