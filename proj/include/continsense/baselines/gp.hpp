#pragma once

#include <chrono>
#include <cmath>
#include <sstream>
#include <vector>

#include "continsense/baselines/knn.hpp"
#include "continsense/dataio/observation.hpp"
#include "continsense/errors.hpp"
#include "continsense/models/train.hpp"
#include "continsense/numkit/linalg.hpp"

namespace continsense::baselines {

struct GpConfig {
  double shrinkage = 0.1;  // lambda: Sigma <- (1 - lambda) Sigma + lambda diag(Sigma)
  double shrinkage_step = 0.1;
};

struct SpatialMoments {
  std::vector<double> mean;
  DenseMatrix covariance;
};

// Per-subarea means from observed cells; covariances from pairwise-complete
// columns around those means. Pairs never observed together get 0, and a
// subarea with fewer than 2 observations borrows the average variance.
inline SpatialMoments estimate_moments(const dataio::ObservationSet& obs) {
  const std::size_t n = obs.n_subareas();
  SpatialMoments m;
  m.mean = observed_row_means(obs);
  const double global = observed_mean(obs);
  for (double& v : m.mean)
    if (std::isnan(v)) v = global;
  m.covariance = DenseMatrix(n, n);
  std::vector<std::size_t> counts(n * n, 0);
  for (std::size_t j = 0; j < obs.n_columns(); ++j)
    for (std::size_t a = 0; a < n; ++a) {
      if (!obs.observed(a, j)) continue;
      const double da = obs.values(a, j) - m.mean[a];
      for (std::size_t b = a; b < n; ++b) {
        if (!obs.observed(b, j)) continue;
        m.covariance(a, b) += da * (obs.values(b, j) - m.mean[b]);
        ++counts[a * n + b];
      }
    }
  double var_sum = 0;
  std::size_t var_count = 0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) {
      const std::size_t c = counts[a * n + b];
      const double v = c > 0 ? m.covariance(a, b) / static_cast<double>(c) : 0.0;
      m.covariance(a, b) = v;
      m.covariance(b, a) = v;
      if (a == b && c >= 2 && v > 0.0) {
        var_sum += v;
        ++var_count;
      }
    }
  const double fallback = var_count > 0 ? var_sum / static_cast<double>(var_count) : 1.0;
  for (std::size_t a = 0; a < n; ++a)
    if (counts[a * n + a] < 2 || !(m.covariance(a, a) > 0.0)) m.covariance(a, a) = fallback;
  return m;
}

inline DenseMatrix shrink(const DenseMatrix& sigma, double lambda) {
  DenseMatrix s = sigma;
  for (std::size_t a = 0; a < s.rows(); ++a)
    for (std::size_t b = 0; b < s.cols(); ++b)
      if (a != b) s(a, b) *= 1.0 - lambda;
  return s;
}

// mu_A + Sigma_AB Sigma_BB^{-1} (y_B - mu_B) for the unobserved set A. Returns
// nullopt if Sigma_BB is not positive definite.
inline std::optional<std::vector<double>> conditional_mean(const std::vector<double>& mu, const DenseMatrix& sigma,
                                                           const std::vector<std::size_t>& observed,
                                                           const std::vector<double>& y_observed) {
  const std::size_t n = mu.size();
  std::vector<double> out = mu;
  if (observed.empty()) return out;
  const std::size_t nb = observed.size();
  DenseMatrix sbb(nb, nb), rhs(nb, 1);
  for (std::size_t p = 0; p < nb; ++p) {
    rhs(p, 0) = y_observed[p] - mu[observed[p]];
    for (std::size_t q = 0; q < nb; ++q) sbb(p, q) = sigma(observed[p], observed[q]);
  }
  const auto l = numkit::cholesky(sbb);
  if (!l) return std::nullopt;
  const DenseMatrix w = numkit::cholesky_solve(*l, rhs);
  std::vector<bool> is_obs(n, false);
  for (std::size_t p = 0; p < nb; ++p) {
    is_obs[observed[p]] = true;
    out[observed[p]] = y_observed[p];
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (is_obs[a]) continue;
    double s = 0;
    for (std::size_t p = 0; p < nb; ++p) s += sigma(a, observed[p]) * w(p, 0);
    out[a] += s;
  }
  return out;
}

// Single multivariate Gaussian over subareas; each column's missing block is
// imputed by its conditional mean. If some Sigma_BB is singular the shrinkage
// grows by shrinkage_step (capped at 1) and the whole matrix is redone.
inline CompletionResult gp_complete(const dataio::ObservationSet& obs, const GpConfig& cfg = {}) {
  dataio::validate(obs);
  if (obs.n_columns() < 2) throw InputError("gp: need at least 2 columns to estimate spatial moments");
  if (!(cfg.shrinkage >= 0.0 && cfg.shrinkage <= 1.0)) throw ConfigError("gp: shrinkage must be in [0, 1]");
  if (!(cfg.shrinkage_step > 0.0)) throw ConfigError("gp: shrinkage_step must be positive");
  const auto start = std::chrono::steady_clock::now();
  const SpatialMoments mom = estimate_moments(obs);
  const std::size_t n = obs.n_subareas();

  CompletionResult res;
  double lambda = cfg.shrinkage;
  while (true) {
    const DenseMatrix sigma = shrink(mom.covariance, lambda);
    res.estimate = obs.values;
    bool singular = false;
    for (std::size_t j = 0; j < obs.n_columns() && !singular; ++j) {
      std::vector<std::size_t> b;
      std::vector<double> yb;
      for (std::size_t i = 0; i < n; ++i)
        if (obs.observed(i, j)) {
          b.push_back(i);
          yb.push_back(obs.values(i, j));
        }
      const auto col = conditional_mean(mom.mean, sigma, b, yb);
      if (!col) {
        singular = true;
        break;
      }
      for (std::size_t i = 0; i < n; ++i)
        if (!obs.observed(i, j)) res.estimate(i, j) = (*col)[i];
    }
    if (!singular) break;
    if (lambda >= 1.0) throw NumericError("gp: covariance singular even when fully shrunk to its diagonal");
    lambda = std::min(1.0, lambda + cfg.shrinkage_step);
    std::ostringstream note;
    note << "shrinkage raised to " << lambda;
    res.report.notes.push_back(note.str());
  }
  res.report.converged = true;
  std::ostringstream used;
  used << "shrinkage " << lambda;
  res.report.notes.push_back(used.str());
  res.report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace continsense::baselines
