#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "continsense/dataio/observation.hpp"
#include "continsense/errors.hpp"
#include "continsense/numkit/random.hpp"

namespace continsense::dataio {

// ---------------------------------------------------------------------------
// Masking and deletion
// ---------------------------------------------------------------------------

struct MaskSpec {
  enum class Mode { KeepK, KeepRatio };
  Mode mode = Mode::KeepK;
  std::size_t k = 1;
  double ratio = 1.0;
  std::uint64_t seed = 0;

  // Observed cells per column for an instance with n subareas.
  std::size_t per_column(std::size_t n) const {
    if (mode == Mode::KeepK) return k;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))));
  }
};

// Leaves exactly k uniformly chosen observed cells in every column. Column j
// draws its cells with a partial Fisher-Yates over [0, N) from one stream
// seeded by spec.seed, columns in order.
inline ObservationSet mask_columns(const GroundTruth& gt, const MaskSpec& spec) {
  const std::size_t n = gt.n_subareas();
  if (spec.mode == MaskSpec::Mode::KeepK && spec.k < 1) throw ParameterError("mask_columns: k must be >= 1");
  if (spec.mode == MaskSpec::Mode::KeepRatio && !(spec.ratio > 0.0 && spec.ratio <= 1.0)) {
    throw ParameterError("mask_columns: ratio must be in (0, 1]");
  }
  const std::size_t k = spec.per_column(n);
  if (k > n) throw ParameterError("mask_columns: k=" + std::to_string(k) + " exceeds N=" + std::to_string(n));
  numkit::Rng rng(spec.seed);
  DenseMatrix mask(n, gt.n_columns());
  for (std::size_t j = 0; j < gt.n_columns(); ++j) {
    for (std::size_t i : rng.sample_without_replacement(n, k)) mask(i, j) = 1.0;
  }
  return observe(gt, mask);
}

// Removes floor(ratio * M) uniformly chosen columns. Surviving columns keep
// their original timestamps.
inline GroundTruth delete_columns(const GroundTruth& gt, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ParameterError("delete_columns: ratio must be in [0, 1)");
  const std::size_t m = gt.n_columns();
  const auto removed = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(m)));
  if (m - removed < 2) throw ParameterError("delete_columns: fewer than 2 columns would survive");
  numkit::Rng rng(seed);
  std::vector<bool> drop(m, false);
  for (std::size_t j : rng.sample_without_replacement(m, removed)) drop[j] = true;

  GroundTruth out;
  out.values = DenseMatrix(gt.n_subareas(), m - removed);
  std::size_t c = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (drop[j]) continue;
    for (std::size_t i = 0; i < gt.n_subareas(); ++i) out.values(i, c) = gt.values(i, j);
    out.times.push_back(gt.times[j]);
    ++c;
  }
  out.area_ids = gt.area_ids;
  out.coords = gt.coords;
  out.field = gt.field;
  out.name = gt.name;
  return out;
}

// Splits off the given column indices (e.g. held-out query timestamps).
inline std::pair<GroundTruth, GroundTruth> split_columns(const GroundTruth& gt, const std::vector<std::size_t>& taken) {
  std::vector<bool> take(gt.n_columns(), false);
  for (std::size_t j : taken) take.at(j) = true;
  GroundTruth kept, held;
  for (GroundTruth* g : {&kept, &held}) {
    g->area_ids = gt.area_ids;
    g->coords = gt.coords;
    g->field = gt.field;
    g->name = gt.name;
  }
  const std::size_t nh = taken.size();
  kept.values = DenseMatrix(gt.n_subareas(), gt.n_columns() - nh);
  held.values = DenseMatrix(gt.n_subareas(), nh);
  std::size_t ck = 0, chd = 0;
  for (std::size_t j = 0; j < gt.n_columns(); ++j) {
    GroundTruth& dst = take[j] ? held : kept;
    std::size_t& c = take[j] ? chd : ck;
    for (std::size_t i = 0; i < gt.n_subareas(); ++i) dst.values(i, c) = gt.values(i, j);
    dst.times.push_back(gt.times[j]);
    ++c;
  }
  return {std::move(kept), std::move(held)};
}

// ---------------------------------------------------------------------------
// Submissions <-> observation sets
// ---------------------------------------------------------------------------

// One column per distinct timestamp; submissions sharing a timestamp share a
// column.
inline ObservationSet to_observation_set(std::vector<Submission> subs, std::size_t n) {
  for (const auto& s : subs) {
    if (s.subarea >= n) throw InputError("to_observation_set: subarea " + std::to_string(s.subarea) + " out of range");
    if (!std::isfinite(s.time) || !std::isfinite(s.value)) throw InputError("to_observation_set: non-finite submission");
  }
  std::sort(subs.begin(), subs.end(), [](const Submission& a, const Submission& b) {
    return a.time < b.time || (a.time == b.time && a.subarea < b.subarea);
  });
  std::vector<double> times;
  for (std::size_t k = 0; k < subs.size(); ++k) {
    if (k > 0 && subs[k].time == subs[k - 1].time && subs[k].subarea == subs[k - 1].subarea) {
      throw InputError("to_observation_set: duplicate submission for subarea " + std::to_string(subs[k].subarea) +
                       " at t=" + std::to_string(subs[k].time));
    }
    if (times.empty() || subs[k].time != times.back()) times.push_back(subs[k].time);
  }
  ObservationSet obs;
  obs.values = DenseMatrix(n, times.size());
  obs.mask = DenseMatrix(n, times.size());
  std::size_t col = 0;
  for (std::size_t k = 0; k < subs.size(); ++k) {
    if (subs[k].time != times[col]) ++col;
    obs.values(subs[k].subarea, col) = subs[k].value;
    obs.mask(subs[k].subarea, col) = 1.0;
  }
  obs.times = std::move(times);
  obs.area_ids = default_area_ids(n);
  return obs;
}

inline std::vector<Submission> to_submissions(const ObservationSet& obs) {
  std::vector<Submission> subs;
  for (std::size_t j = 0; j < obs.n_columns(); ++j)
    for (std::size_t i = 0; i < obs.n_subareas(); ++i)
      if (obs.observed(i, j)) subs.push_back({obs.times[j], i, obs.values(i, j)});
  return subs;
}

// ---------------------------------------------------------------------------
// Time-discrete merge
// ---------------------------------------------------------------------------

struct DiscreteObservation {
  double unit_length = 0.0;
  double origin = 0.0;  // t of the first column; unit p covers [origin + p L, origin + (p+1) L)
  std::size_t units = 0;
  DenseMatrix values;  // N x P
  DenseMatrix mask;    // N x P
  std::vector<std::size_t> column_unit;  // unit index of each source column

  double unit_center(std::size_t p) const { return origin + (static_cast<double>(p) + 0.5) * unit_length; }
};

// Buckets columns by floor((t - t0) / L) and averages each subarea's
// submissions per unit. P = max(1, ceil(span / L)); a submission landing
// exactly on the closing boundary of the timeline belongs to the last unit.
inline DiscreteObservation discretize_merge(const ObservationSet& obs, double unit_length) {
  if (!(unit_length > 0.0)) throw ParameterError("discretize_merge: unit_length must be positive");
  if (obs.n_columns() == 0) throw InputError("discretize_merge: empty observation set");
  const double t0 = obs.times.front();
  const double span = obs.times.back() - t0;
  const auto units = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / unit_length)));

  DiscreteObservation d;
  d.unit_length = unit_length;
  d.origin = t0;
  d.units = units;
  d.values = DenseMatrix(obs.n_subareas(), units);
  d.mask = DenseMatrix(obs.n_subareas(), units);
  DenseMatrix counts(obs.n_subareas(), units);
  for (std::size_t j = 0; j < obs.n_columns(); ++j) {
    auto p = static_cast<std::size_t>(std::floor((obs.times[j] - t0) / unit_length));
    p = std::min(p, units - 1);
    d.column_unit.push_back(p);
    for (std::size_t i = 0; i < obs.n_subareas(); ++i) {
      if (!obs.observed(i, j)) continue;
      d.values(i, p) += obs.values(i, j);
      counts(i, p) += 1.0;
    }
  }
  for (std::size_t idx = 0; idx < counts.size(); ++idx) {
    if (counts[idx] > 0.0) {
      d.values[idx] /= counts[idx];
      d.mask[idx] = 1.0;
    }
  }
  return d;
}

// The merged grid as an ObservationSet with one column per unit, timestamped
// at unit centers. Units with no submission keep an all-zero mask column.
inline ObservationSet discrete_as_observation_set(const DiscreteObservation& d, const ObservationSet& source) {
  ObservationSet o;
  o.values = d.values;
  o.mask = d.mask;
  for (std::size_t p = 0; p < d.units; ++p) o.times.push_back(d.unit_center(p));
  o.area_ids = source.area_ids;
  o.coords = source.coords;
  o.name = source.name + "/merged";
  o.units = source.units;
  return o;
}

// Broadcast a unit-level estimate back onto the source columns.
inline DenseMatrix expand_discrete_estimate(const DiscreteObservation& d, const DenseMatrix& unit_estimate) {
  DenseMatrix out(unit_estimate.rows(), d.column_unit.size());
  for (std::size_t j = 0; j < d.column_unit.size(); ++j)
    for (std::size_t i = 0; i < unit_estimate.rows(); ++i) out(i, j) = unit_estimate(i, d.column_unit[j]);
  return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

struct AffineRecord {
  double mean = 0.0;
  double std = 1.0;
  bool std_floored = false;

  double forward(double v) const { return (v - mean) / std; }
  double inverse(double v) const { return v * std + mean; }
};

inline constexpr double kStdFloor = 1e-8;

// z-score using mean and std over observed cells only. Unobserved cells get
// the sentinel 0.
inline std::pair<ObservationSet, AffineRecord> normalize(const ObservationSet& obs) {
  const std::size_t count = obs.observed_count();
  if (count < 2) throw InputError("normalize: need at least 2 observed cells");
  double sum = 0.0;
  for (std::size_t i = 0; i < obs.mask.size(); ++i)
    if (obs.mask[i] == 1.0) sum += obs.values[i];
  AffineRecord rec;
  rec.mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (std::size_t i = 0; i < obs.mask.size(); ++i)
    if (obs.mask[i] == 1.0) ss += (obs.values[i] - rec.mean) * (obs.values[i] - rec.mean);
  rec.std = std::sqrt(ss / static_cast<double>(count));
  if (!(rec.std >= kStdFloor)) {
    rec.std = kStdFloor;
    rec.std_floored = true;
  }
  ObservationSet out = obs;
  for (std::size_t i = 0; i < out.mask.size(); ++i) out.values[i] = out.mask[i] == 1.0 ? rec.forward(obs.values[i]) : 0.0;
  return {std::move(out), rec};
}

inline DenseMatrix denormalize(const DenseMatrix& m, const AffineRecord& rec) {
  DenseMatrix out = m;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rec.inverse(out[i]);
  return out;
}

}  // namespace continsense::dataio
