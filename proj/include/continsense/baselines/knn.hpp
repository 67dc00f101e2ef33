#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <vector>

#include "continsense/dataio/observation.hpp"
#include "continsense/errors.hpp"
#include "continsense/models/train.hpp"

namespace continsense::baselines {

using models::CompletionResult;
using numkit::DenseMatrix;

// Symmetric, zero-diagonal, nonnegative distances between subareas.
struct SpatialIndex {
  DenseMatrix distance;
  bool from_coordinates = false;

  std::size_t size() const noexcept { return distance.rows(); }
};

inline SpatialIndex spatial_index_from_coords(const dataio::Coordinates& c) {
  if (c.x.size() != c.y.size()) throw DimensionError("spatial index: x and y differ in length");
  SpatialIndex s;
  s.from_coordinates = true;
  const std::size_t n = c.x.size();
  s.distance = DenseMatrix(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d = std::hypot(c.x[a] - c.x[b], c.y[a] - c.y[b]);
      s.distance(a, b) = d;
      s.distance(b, a) = d;
    }
  return s;
}

// Pearson correlation over columns where both subareas are observed; pairs
// with fewer than 3 such columns or no variance get distance 1.
inline SpatialIndex spatial_index_from_correlation(const dataio::ObservationSet& obs) {
  const std::size_t n = obs.n_subareas();
  SpatialIndex s;
  s.distance = DenseMatrix(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      std::vector<double> va, vb;
      for (std::size_t j = 0; j < obs.n_columns(); ++j) {
        if (obs.observed(a, j) && obs.observed(b, j)) {
          va.push_back(obs.values(a, j));
          vb.push_back(obs.values(b, j));
        }
      }
      double d = 1.0;
      if (va.size() >= 3) {
        const double ma = std::accumulate(va.begin(), va.end(), 0.0) / static_cast<double>(va.size());
        const double mb = std::accumulate(vb.begin(), vb.end(), 0.0) / static_cast<double>(vb.size());
        double sab = 0, saa = 0, sbb = 0;
        for (std::size_t k = 0; k < va.size(); ++k) {
          sab += (va[k] - ma) * (vb[k] - mb);
          saa += (va[k] - ma) * (va[k] - ma);
          sbb += (vb[k] - mb) * (vb[k] - mb);
        }
        if (saa > 0.0 && sbb > 0.0) d = 1.0 - std::min(1.0, std::abs(sab / std::sqrt(saa * sbb)));
      }
      s.distance(a, b) = d;
      s.distance(b, a) = d;
    }
  return s;
}

inline SpatialIndex spatial_index(const dataio::ObservationSet& obs) {
  return obs.coords ? spatial_index_from_coords(*obs.coords) : spatial_index_from_correlation(obs);
}

// Mean of each subarea's observed values; nullopt-like NaN for never-observed
// subareas.
inline std::vector<double> observed_row_means(const dataio::ObservationSet& obs) {
  std::vector<double> means(obs.n_subareas(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < obs.n_subareas(); ++i) {
    double s = 0;
    std::size_t c = 0;
    for (std::size_t j = 0; j < obs.n_columns(); ++j)
      if (obs.observed(i, j)) {
        s += obs.values(i, j);
        ++c;
      }
    if (c > 0) means[i] = s / static_cast<double>(c);
  }
  return means;
}

inline double observed_mean(const dataio::ObservationSet& obs) {
  double s = 0;
  std::size_t c = 0;
  for (std::size_t i = 0; i < obs.mask.size(); ++i)
    if (obs.mask[i] == 1.0) {
      s += obs.values[i];
      ++c;
    }
  return c > 0 ? s / static_cast<double>(c) : 0.0;
}

// Each missing cell takes the mean of its k nearest subareas observed in the
// same column (ties by subarea index). With no observation in the column the
// subarea's own mean is used; a subarea never observed falls back to the
// global mean and the cell is flagged.
inline CompletionResult knn_s_complete(const dataio::ObservationSet& obs, std::size_t k, const SpatialIndex& index) {
  dataio::validate(obs);
  if (k < 1) throw ConfigError("knn-s: k must be >= 1");
  if (index.size() != obs.n_subareas()) throw DimensionError("knn-s: spatial index size does not match N");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = obs.n_subareas();
  const auto row_means = observed_row_means(obs);
  const double global = observed_mean(obs);

  CompletionResult res;
  res.estimate = obs.values;
  std::vector<std::size_t> seen;
  for (std::size_t j = 0; j < obs.n_columns(); ++j) {
    seen.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (obs.observed(i, j)) seen.push_back(i);
    for (std::size_t i = 0; i < n; ++i) {
      if (obs.observed(i, j)) continue;
      if (seen.empty()) {
        if (std::isnan(row_means[i])) {
          res.estimate(i, j) = global;
          res.flagged.emplace_back(i, j);
        } else {
          res.estimate(i, j) = row_means[i];
        }
        continue;
      }
      std::vector<std::size_t> order = seen;
      const std::size_t take = std::min(k, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                        [&](std::size_t a, std::size_t b) {
                          const double da = index.distance(i, a), db = index.distance(i, b);
                          return da < db || (da == db && a < b);
                        });
      double s = 0;
      for (std::size_t q = 0; q < take; ++q) s += obs.values(order[q], j);
      res.estimate(i, j) = s / static_cast<double>(take);
    }
  }
  res.report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  res.report.converged = true;
  return res;
}

}  // namespace continsense::baselines
