#pragma once

#include <vector>

#include "continsense/baselines/knn.hpp"
#include "continsense/dataio/observation.hpp"
#include "continsense/errors.hpp"

namespace continsense::baselines {

struct Line {
  double slope = 0.0;
  double intercept = 0.0;
  double at(double t) const { return intercept + slope * t; }
};

// Least-squares line through (t, v). Times are centered before fitting so
// that large epoch-second timestamps do not cost precision. Requires at least
// two points with distinct times.
inline Line fit_line(const std::vector<double>& t, const std::vector<double>& v) {
  if (t.size() != v.size()) throw DimensionError("fit_line: t and v differ in length");
  if (t.size() < 2) throw InputError("fit_line: need at least 2 points");
  const auto n = static_cast<double>(t.size());
  double tm = 0, vm = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    tm += t[k];
    vm += v[k];
  }
  tm /= n;
  vm /= n;
  double stt = 0, stv = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    stt += (t[k] - tm) * (t[k] - tm);
    stv += (t[k] - tm) * (v[k] - vm);
  }
  if (!(stt > 0.0)) throw InputError("fit_line: all times coincide");
  Line l;
  l.slope = stv / stt;
  l.intercept = vm - l.slope * tm;
  return l;
}

struct LinearPrediction {
  std::vector<double> values;
  std::vector<bool> flagged;  // subarea fell back to a mean
};

// Per-subarea regression line over its observed (time, value) pairs,
// evaluated at t. Subareas with fewer than 2 observations use their own mean
// (or the global mean if never observed) and are flagged.
inline LinearPrediction linear_predict(const dataio::ObservationSet& obs, double t) {
  dataio::validate(obs);
  const double global = observed_mean(obs);
  LinearPrediction p;
  for (std::size_t i = 0; i < obs.n_subareas(); ++i) {
    std::vector<double> ts, vs;
    for (std::size_t j = 0; j < obs.n_columns(); ++j)
      if (obs.observed(i, j)) {
        ts.push_back(obs.times[j]);
        vs.push_back(obs.values(i, j));
      }
    if (ts.size() >= 2) {
      p.values.push_back(fit_line(ts, vs).at(t));
      p.flagged.push_back(false);
    } else {
      p.values.push_back(ts.empty() ? global : vs[0]);
      p.flagged.push_back(true);
    }
  }
  return p;
}

}  // namespace continsense::baselines
