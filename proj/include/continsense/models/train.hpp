#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "continsense/dataio/observation.hpp"
#include "continsense/dataio/protocols.hpp"
#include "continsense/errors.hpp"
#include "continsense/models/model.hpp"
#include "continsense/numkit/adam.hpp"

namespace continsense::models {

struct TrainingReport {
  int epochs = 0;
  double final_loss = 0.0;  // masked loss of the returned estimate, normalized units
  double wall_ms = 0.0;
  bool converged = false;
  std::size_t param_count = 0;
  std::vector<double> loss_trace;  // loss before each update
  std::vector<std::string> notes;
};

struct CompletionResult {
  numkit::DenseMatrix estimate;  // N x M, original units
  numkit::DenseMatrix latent;    // r x M
  TrainingReport report;
  std::vector<std::pair<std::size_t, std::size_t>> flagged;  // cells filled by a fallback
};

// A model together with everything needed to keep training it.
struct TrainedModel {
  Model model;
  dataio::ObservationSet normalized;
  dataio::AffineRecord affine;
  numkit::OptimizerState optimizer;
  TrainingReport report;
};

inline bool plateaued(const std::vector<double>& trace, int patience, double tol) {
  const auto p = static_cast<std::size_t>(patience);
  if (trace.size() <= p) return false;
  const double before = trace[trace.size() - 1 - p];
  const double now = trace.back();
  const double scale = std::max(std::abs(before), 1e-300);
  return (before - now) / scale < tol;
}

// Full-batch Adam on the masked loss until the relative improvement over the
// patience window drops below tol or max_epochs updates have been made.
inline TrainingReport fit(Model& model, const dataio::ObservationSet& target, numkit::OptimizerState& opt) {
  if (target.n_subareas() != model.n || target.n_columns() != model.layout.latents.size()) {
    throw DimensionError("fit: target " + target.values.shape() + " does not match the model");
  }
  const ModelConfig& cfg = model.cfg;
  const auto start = std::chrono::steady_clock::now();
  TrainingReport rep;
  Tape tape;
  double last_finite = std::numeric_limits<double>::quiet_NaN();
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    tape.reset();
    Var loss = tape.masked_loss(forward(tape, model), target.values, target.mask);
    const double l = loss.value()(0, 0);
    if (!std::isfinite(l)) {
      throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch), epoch - 1, last_finite);
    }
    last_finite = l;
    rep.loss_trace.push_back(l);
    if (plateaued(rep.loss_trace, cfg.patience, cfg.tol)) {
      rep.converged = true;
      break;
    }
    numkit::adam_step(opt, model.store, tape.gradients(loss, model.store));
    ++rep.epochs;
  }
  tape.reset();
  rep.final_loss = tape.masked_loss(forward(tape, model), target.values, target.mask).value()(0, 0);
  if (!std::isfinite(rep.final_loss)) {
    throw TrainingError("training diverged: non-finite loss after the last update", rep.epochs, last_finite);
  }
  rep.param_count = model.store.trainable_scalar_count();
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

inline numkit::OptimizerState make_optimizer(const ModelConfig& cfg) {
  numkit::AdamConfig a;
  a.lr = cfg.lr;
  return numkit::OptimizerState(a);
}

inline TrainedModel train_model(const dataio::ObservationSet& obs, const ModelConfig& cfg, ModelKind kind) {
  dataio::validate(obs);
  auto [norm, affine] = dataio::normalize(obs);
  TrainedModel tm{build_model(kind, cfg, obs.n_subareas(), obs.times), std::move(norm), affine, make_optimizer(cfg), {}};
  tm.report = fit(tm.model, tm.normalized, tm.optimizer);
  return tm;
}

inline CompletionResult result_of(const TrainedModel& tm) {
  return {dataio::denormalize(estimate(tm.model), tm.affine), latent_matrix(tm.model), tm.report, {}};
}

// Jointly fits latents, encoder and decoder to the observed cells and returns
// the completed matrix in original units.
inline CompletionResult train(const dataio::ObservationSet& obs, const ModelConfig& cfg, ModelKind kind) {
  return result_of(train_model(obs, cfg, kind));
}

// ---------------------------------------------------------------------------
// Query-Generate
// ---------------------------------------------------------------------------

struct QgInsertion {
  dataio::ObservationSet obs;
  std::size_t index = 0;
  bool inserted = false;
};

// Adds an all-zero mask column (sentinel 0) for t at its sorted position.
inline QgInsertion qg_insert(const dataio::ObservationSet& obs, double t) {
  const auto [k, present] = insertion_point(obs.times, t);
  QgInsertion q{obs, k, !present};
  if (present) return q;
  const std::size_t n = obs.n_subareas(), m = obs.n_columns();
  q.obs.values = numkit::DenseMatrix(n, m + 1);
  q.obs.mask = numkit::DenseMatrix(n, m + 1);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t dst = j < k ? j : j + 1;
    for (std::size_t i = 0; i < n; ++i) {
      q.obs.values(i, dst) = obs.values(i, j);
      q.obs.mask(i, dst) = obs.mask(i, j);
    }
  }
  q.obs.times.insert(q.obs.times.begin() + static_cast<std::ptrdiff_t>(k), t);
  return q;
}

// Same insertion applied to a model's latent path as well. The new latent is
// trainable unless `trainable` is false.
inline QgInsertion qg_insert(const dataio::ObservationSet& obs, Model& model, double t, bool trainable = true) {
  if (obs.times != model.times) throw InputError("qg_insert: observation set and model are not aligned");
  QgInsertion q = qg_insert(obs, t);
  const std::size_t k = insert_column(model, t, trainable);
  if (k != q.index) throw InputError("qg_insert: model and data disagree on the insertion index");
  return q;
}

struct QueryResult {
  numkit::DenseMatrix estimate;        // N x Q, original units, one column per query time
  std::vector<std::size_t> columns;    // column index of each query in the augmented instance
  TrainingReport report;
};

// Estimates the field at every query time. All queries are inserted, then the
// model is trained once; with cfg.warm_start the model is first fitted on the
// original instance and training resumes after insertion.
inline QueryResult query_many(const dataio::ObservationSet& obs, const ModelConfig& cfg, const std::vector<double>& ts,
                              ModelKind kind = ModelKind::TimeDmf) {
  if (ts.empty()) throw InputError("query: no query times");
  dataio::validate(obs);
  for (double t : ts) insertion_point(obs.times, t);  // range check before any training

  TrainedModel tm;
  if (cfg.warm_start) {
    tm = train_model(obs, cfg, kind);
    for (double t : ts) tm.normalized = qg_insert(tm.normalized, tm.model, t).obs;
    const TrainingReport first = tm.report;
    tm.report = fit(tm.model, tm.normalized, tm.optimizer);
    tm.report.epochs += first.epochs;
    tm.report.wall_ms += first.wall_ms;
  } else {
    dataio::ObservationSet aug = obs;
    for (double t : ts) aug = qg_insert(aug, t).obs;
    tm = train_model(aug, cfg, kind);
  }

  const numkit::DenseMatrix full = dataio::denormalize(estimate(tm.model), tm.affine);
  QueryResult out;
  out.estimate = numkit::DenseMatrix(obs.n_subareas(), ts.size());
  for (std::size_t q = 0; q < ts.size(); ++q) {
    const std::size_t k = insertion_point(tm.model.times, ts[q]).first;
    out.columns.push_back(k);
    for (std::size_t i = 0; i < obs.n_subareas(); ++i) out.estimate(i, q) = full(i, k);
  }
  out.report = tm.report;
  return out;
}

// Column estimate at a single query time, original units.
inline std::vector<double> query(const dataio::ObservationSet& obs, const ModelConfig& cfg, double t,
                                 ModelKind kind = ModelKind::TimeDmf) {
  const QueryResult r = query_many(obs, cfg, {t}, kind);
  std::vector<double> col(r.estimate.rows());
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = r.estimate(i, 0);
  return col;
}

}  // namespace continsense::models
