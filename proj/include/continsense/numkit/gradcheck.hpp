#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "continsense/errors.hpp"
#include "continsense/numkit/params.hpp"

namespace continsense::numkit {

using LossFn = std::function<double(const ParamStore&)>;

// Central differences (f(theta + h) - f(theta - h)) / 2h for every coordinate
// of every trainable parameter. The store is perturbed in place and restored.
inline GradientMap finite_diff_gradients(const LossFn& loss_fn, ParamStore& params, double h = 1e-5) {
  if (!(h > 0.0)) throw ParameterError("finite_diff_gradients: step must be positive");
  GradientMap out;
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    DenseMatrix g(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double fp = loss_fn(params);
      p.value[i] = orig - h;
      const double fm = loss_fn(params);
      p.value[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("finite_diff_gradients: non-finite evaluation at parameter '" + p.name + "' coordinate " +
                           std::to_string(i));
      }
      g[i] = (fp - fm) / (2.0 * h);
    }
    out.emplace(p.id, std::move(g));
  }
  return out;
}

// Relative error with an absolute floor: |a - b| / max(|a|, |b|, floor/rel_tol).
// A value <= rel_tol means |a - b| <= rel_tol * max(|a|, |b|) or |a - b| <= floor.
inline double relative_error(double a, double b, double rel_tol = 1e-4, double abs_floor = 1e-8) {
  const double scale = std::max({std::abs(a), std::abs(b), abs_floor / rel_tol});
  return std::abs(a - b) / scale;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

inline GradCheckReport compare_gradients(const GradientMap& analytic, const GradientMap& numeric,
                                         const ParamStore& params, double rel_tol = 1e-4, double abs_floor = 1e-8) {
  GradCheckReport r;
  for (const auto& [id, num] : numeric) {
    auto it = analytic.find(id);
    if (it == analytic.end()) throw InputError("compare_gradients: missing analytic gradient for '" + params[id].name + "'");
    require_same_shape(it->second, num, "compare_gradients");
    for (std::size_t i = 0; i < num.size(); ++i) {
      const double e = relative_error(it->second[i], num[i], rel_tol, abs_floor);
      ++r.coordinates;
      if (r.worst_param.empty() || e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst_param = params[id].name;
        r.worst_index = i;
      }
    }
  }
  return r;
}

}  // namespace continsense::numkit
