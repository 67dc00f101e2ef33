#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "continsense/dataio/observation.hpp"
#include "continsense/errors.hpp"
#include "continsense/numkit/random.hpp"

namespace continsense::dataio {

enum class SyntheticKind { SmoothField, Rank1, Seasonal };

inline SyntheticKind parse_synthetic_kind(const std::string& s) {
  if (s == "smooth-field") return SyntheticKind::SmoothField;
  if (s == "rank1") return SyntheticKind::Rank1;
  if (s == "seasonal") return SyntheticKind::Seasonal;
  throw ConfigError("unknown synthetic kind '" + s + "' (expected smooth-field|rank1|seasonal)");
}

inline const char* to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::SmoothField: return "smooth-field";
    case SyntheticKind::Rank1: return "rank1";
    case SyntheticKind::Seasonal: return "seasonal";
  }
  return "?";
}

enum class TimeLayout { SortedUniform, Even };

struct SyntheticOptions {
  double span_seconds = 7.0 * 86400.0;
  TimeLayout layout = TimeLayout::SortedUniform;
  // Number of plane waves in the smooth field and their temporal frequency
  // range, in full cycles over the span.
  int waves = 3;
  double min_cycles = 1.0;
  double max_cycles = 4.0;
  double noise_std = 0.02;
};

namespace detail {

inline std::vector<double> draw_times(std::size_t m, const SyntheticOptions& opt, numkit::Rng& rng) {
  std::vector<double> t(m);
  if (opt.layout == TimeLayout::Even) {
    for (std::size_t j = 0; j < m; ++j) t[j] = opt.span_seconds * static_cast<double>(j) / static_cast<double>(m - 1);
    return t;
  }
  while (true) {
    for (auto& v : t) v = rng.uniform01() * opt.span_seconds;
    std::sort(t.begin(), t.end());
    if (std::adjacent_find(t.begin(), t.end()) == t.end()) return t;
  }
}

}  // namespace detail

// Y = u v^T sampled at `times`.
inline GroundTruth make_rank1(const std::vector<double>& u, const std::vector<double>& v, std::vector<double> times) {
  if (v.size() != times.size()) throw DimensionError("make_rank1: v and times differ in length");
  GroundTruth gt;
  gt.values = DenseMatrix(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) gt.values(i, j) = u[i] * v[j];
  gt.times = std::move(times);
  gt.area_ids = default_area_ids(u.size());
  gt.name = "rank1";
  return gt;
}

// Deterministic per (kind, n, m, seed, options).
//
// smooth-field: subareas at uniform positions in the unit square; the field is
// a sum of plane waves
//     Y_i(t) = mu_i + sum_k a_k sin(w_k t + kappa_k <d_k, p_i> + psi_k) + noise
// so that nearby subareas and nearby times are similar.
// seasonal: smooth-field plus a per-subarea daily cycle.
// rank1: u_i, v_j drawn from uniform(0.5, 1.5); times as configured.
inline GroundTruth generate_synthetic(SyntheticKind kind, std::size_t n, std::size_t m, std::uint64_t seed,
                                      const SyntheticOptions& opt = {}) {
  if (n < 2 || m < 2) throw ParameterError("generate_synthetic: need n >= 2 and m >= 2");
  if (!(opt.span_seconds > 0.0)) throw ParameterError("generate_synthetic: span must be positive");
  numkit::Rng rng(seed);
  std::vector<double> times = detail::draw_times(m, opt, rng);

  if (kind == SyntheticKind::Rank1) {
    std::vector<double> u(n), v(m);
    for (auto& x : u) x = rng.uniform(0.5, 1.5);
    for (auto& x : v) x = rng.uniform(0.5, 1.5);
    GroundTruth gt = make_rank1(u, v, std::move(times));
    return gt;
  }

  struct Wave {
    double amp, omega, kappa, dx, dy, psi;
  };
  struct Field {
    std::vector<Wave> waves;
    std::vector<double> mu, px, py, daily_amp, daily_phase;
    bool seasonal = false;
    double eval(std::size_t i, double t) const {
      double v = mu[i];
      for (const Wave& w : waves) v += w.amp * std::sin(w.omega * t + w.kappa * (w.dx * px[i] + w.dy * py[i]) + w.psi);
      if (seasonal) v += daily_amp[i] * std::sin(2.0 * std::numbers::pi * t / 86400.0 + daily_phase[i]);
      return v;
    }
  };
  auto field = std::make_shared<Field>();
  field->seasonal = kind == SyntheticKind::Seasonal;
  Coordinates coords;
  for (std::size_t i = 0; i < n; ++i) {
    coords.x.push_back(rng.uniform01());
    coords.y.push_back(rng.uniform01());
  }
  field->px = coords.x;
  field->py = coords.y;
  const double tilt = rng.uniform(-0.5, 0.5);
  for (std::size_t i = 0; i < n; ++i) field->mu.push_back(tilt * (coords.x[i] - 0.5));
  for (int k = 0; k < opt.waves; ++k) {
    Wave w;
    w.amp = rng.uniform(0.5, 1.5);
    const double cycles = rng.uniform(opt.min_cycles, opt.max_cycles);
    w.omega = 2.0 * std::numbers::pi * cycles / opt.span_seconds;
    w.kappa = std::numbers::pi * rng.uniform(0.5, 2.0);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    w.dx = std::cos(theta);
    w.dy = std::sin(theta);
    w.psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    field->waves.push_back(w);
  }
  if (field->seasonal) {
    for (std::size_t i = 0; i < n; ++i) {
      field->daily_amp.push_back(rng.uniform(0.2, 0.6));
      field->daily_phase.push_back(rng.uniform(0.0, 0.5));
    }
  }

  GroundTruth gt;
  gt.values = DenseMatrix(n, m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < n; ++i) gt.values(i, j) = field->eval(i, times[j]);
  if (opt.noise_std > 0.0)
    for (std::size_t idx = 0; idx < gt.values.size(); ++idx) gt.values[idx] += opt.noise_std * rng.normal();
  gt.times = std::move(times);
  gt.area_ids = default_area_ids(n);
  gt.coords = std::move(coords);
  gt.field = [field](std::size_t i, double t) { return field->eval(i, t); };
  gt.name = to_string(kind);
  return gt;
}

}  // namespace continsense::dataio
