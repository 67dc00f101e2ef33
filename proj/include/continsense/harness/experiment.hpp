#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "continsense/baselines/gp.hpp"
#include "continsense/baselines/knn.hpp"
#include "continsense/baselines/linear.hpp"
#include "continsense/baselines/mc.hpp"
#include "continsense/dataio/csv.hpp"
#include "continsense/dataio/protocols.hpp"
#include "continsense/dataio/synthetic.hpp"
#include "continsense/harness/config.hpp"
#include "continsense/harness/emit.hpp"
#include "continsense/harness/metrics.hpp"
#include "continsense/models/train.hpp"
#include "continsense/numkit/gradcheck.hpp"

namespace continsense::harness {

inline constexpr std::size_t kGenerationQueries = 20;
inline constexpr std::size_t kKnnNeighbors = 3;
inline constexpr double kGradCheckStep = 1e-5;

// splitmix64 over (a, b): independent streams for every (seed, purpose) pair.
inline std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum class Stream : std::uint64_t { Data = 1, Mask = 2, Delete = 3, Holdout = 4, Model = 5 };

inline std::uint64_t stream_seed(std::uint64_t seed, Stream s) { return derive_seed(seed, static_cast<std::uint64_t>(s)); }

// ---------------------------------------------------------------------------
// Methods
// ---------------------------------------------------------------------------

inline baselines::McConfig mc_config_from(const models::ModelConfig& cfg) {
  baselines::McConfig mc;
  mc.rank = cfg.latent_dim;
  mc.lr = cfg.lr;
  mc.max_epochs = cfg.max_epochs;
  mc.tol = cfg.tol;
  mc.patience = cfg.patience;
  mc.seed = cfg.seed;
  return mc;
}

// Completes obs with a named method; the estimate is N x M in original units.
inline models::CompletionResult complete_with(const std::string& method, const dataio::ObservationSet& obs,
                                              const models::ModelConfig& cfg) {
  if (is_model_method(method)) return models::train(obs, cfg, models::parse_model_kind(method));
  if (method == "mc") return baselines::mc_complete(obs, mc_config_from(cfg));
  if (method == "knn-s") return baselines::knn_s_complete(obs, kKnnNeighbors, baselines::spatial_index(obs));
  if (method == "gp") return baselines::gp_complete(obs);
  throw ConfigError("method '" + method + "' cannot complete a matrix");
}

// ---------------------------------------------------------------------------
// Gradient check on a small random instance
// ---------------------------------------------------------------------------

struct GradCheckOutcome {
  double max_rel_error = 0.0;
  double rmse = 0.0;     // analytic vs numeric, over all coordinates
  double epsilon = 0.0;  // sum of absolute differences
  std::size_t coordinates = 0;
  std::size_t param_count = 0;
  std::string worst;
};

// N <= 6, M <= 8, hidden <= 4, parameters pushed off their initialization.
inline GradCheckOutcome gradient_check(models::ModelKind kind, std::uint64_t seed) {
  numkit::Rng rng(derive_seed(seed, 0xC0FFEE));
  const std::size_t n = 2 + rng.index(5), m = 2 + rng.index(7);
  models::ModelConfig cfg;
  cfg.latent_dim = 1 + rng.index(3);
  cfg.hidden_dim = 1 + rng.index(4);
  cfg.decoder_layers = {{1 + rng.index(4), numkit::ActivationKind::Tanh}};
  cfg.tau_mode = seed % 2 == 0 ? models::TauMode::MeanGap : models::TauMode::Unit;
  cfg.seed = seed;

  dataio::ObservationSet obs;
  obs.values = DenseMatrix(n, m);
  obs.mask = DenseMatrix(n, m);
  double t = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    t += rng.uniform(10.0, 600.0);
    obs.times.push_back(t);
    obs.mask(rng.index(n), j) = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.uniform01() < 0.5) obs.mask(i, j) = 1.0;
      obs.values(i, j) = obs.mask(i, j) == 1.0 ? rng.uniform(-2.0, 2.0) : 0.0;
    }
  }
  obs.area_ids = dataio::default_area_ids(n);

  models::Model model = models::build_model(kind, cfg, n, obs.times);
  for (auto& p : model.store)
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += rng.uniform(-0.5, 0.5);

  numkit::Tape tape;
  numkit::Var loss = tape.masked_loss(models::forward(tape, model), obs.values, obs.mask);
  const auto analytic = tape.gradients(loss, model.store);
  const auto numeric = numkit::finite_diff_gradients(
      [&](const numkit::ParamStore&) {
        numkit::Tape t2;
        return t2.masked_loss(models::forward(t2, model), obs.values, obs.mask).value()(0, 0);
      },
      model.store, kGradCheckStep);
  const auto report = numkit::compare_gradients(analytic, numeric, model.store);

  GradCheckOutcome out;
  out.max_rel_error = report.max_rel_error;
  out.coordinates = report.coordinates;
  out.param_count = model.store.trainable_scalar_count();
  out.worst = report.worst_param + "[" + std::to_string(report.worst_index) + "]";
  double se = 0.0;
  for (const auto& [id, num] : numeric) {
    const DenseMatrix& an = analytic.at(id);
    for (std::size_t i = 0; i < num.size(); ++i) {
      const double d = an[i] - num[i];
      se += d * d;
      out.epsilon += std::abs(d);
    }
  }
  out.rmse = out.coordinates > 0 ? std::sqrt(se / static_cast<double>(out.coordinates)) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Cells
// ---------------------------------------------------------------------------

struct Setting {
  std::string label;
  double x = 0.0;
  dataio::MaskSpec mask;
  double delete_ratio = 0.0;
  double unit_length = 0.0;
};

inline std::vector<Setting> settings_of(const ExperimentConfig& cfg) {
  std::vector<Setting> masks;
  const bool keep_k = cfg.mask.mode == dataio::MaskSpec::Mode::KeepK;
  for (std::size_t q = 0; q < cfg.mask.size(); ++q) {
    Setting s;
    s.mask.mode = cfg.mask.mode;
    if (keep_k) {
      s.mask.k = cfg.mask.ks[q];
      s.label = "k=" + std::to_string(s.mask.k);
      s.x = static_cast<double>(s.mask.k);
    } else {
      s.mask.ratio = cfg.mask.ratios[q];
      s.label = "ratio=" + dataio::detail::format_double(s.mask.ratio);
      s.x = s.mask.ratio;
    }
    masks.push_back(s);
  }
  const bool many_masks = masks.size() > 1;
  auto crossed = [&](const std::vector<double>& values, const char* name, auto assign) {
    std::vector<Setting> out;
    for (double v : values)
      for (Setting s : masks) {
        const std::string own = std::string(name) + "=" + dataio::detail::format_double(v);
        s.label = many_masks ? own + "," + s.label : own;
        s.x = v;
        assign(s, v);
        out.push_back(s);
      }
    return out;
  };
  switch (cfg.scenario) {
    case Scenario::SparsitySweep:
    case Scenario::Generation:
      return masks;
    case Scenario::DeletionAblation:
      return crossed(cfg.delete_ratios, "delete", [](Setting& s, double v) { s.delete_ratio = v; });
    case Scenario::DiscreteVsContinuous:
      return crossed(cfg.unit_lengths, "L", [](Setting& s, double v) { s.unit_length = v; });
    case Scenario::GradCheck: {
      Setting s;
      s.label = "h=" + dataio::detail::format_double(kGradCheckStep);
      s.x = kGradCheckStep;
      return {s};
    }
  }
  return masks;
}

// The dense ground truth a cell works on. A file is shared by all seeds; a
// synthetic instance is drawn per seed. Deletion runs on an evenly spaced
// timeline so that gaps come from deletion alone.
class DatasetSource {
 public:
  explicit DatasetSource(const ExperimentConfig& cfg) : cfg_(cfg) {
    if (cfg.scenario == Scenario::GradCheck || !cfg.dataset.path) return;
    auto grid = dataio::load_grid_csv(*cfg.dataset.path);
    if (!std::holds_alternative<dataio::GroundTruth>(grid)) {
      throw ConfigError("dataset '" + cfg.dataset.path->string() + "' has empty cells; experiments need a dense grid");
    }
    file_ = std::get<dataio::GroundTruth>(std::move(grid));
  }

  dataio::GroundTruth instance(std::uint64_t seed) const {
    if (file_) return *file_;
    const SyntheticSpec& s = *cfg_.dataset.synthetic;
    dataio::SyntheticOptions opt;
    opt.span_seconds = s.span_seconds;
    if (cfg_.scenario == Scenario::DeletionAblation) opt.layout = dataio::TimeLayout::Even;
    return dataio::generate_synthetic(s.kind, s.n, s.m, derive_seed(s.seed, stream_seed(seed, Stream::Data)), opt);
  }

 private:
  const ExperimentConfig& cfg_;
  std::optional<dataio::GroundTruth> file_;
};

namespace detail {

inline void fill_from(CellRecord& r, const models::CompletionResult& res) {
  r.epochs = res.report.epochs;
  r.ms = res.report.wall_ms;
  r.param_count = res.report.param_count;
  for (const auto& note : res.report.notes) r.flags.push_back(note);
  if (!res.flagged.empty()) r.flags.push_back("fallback cells " + std::to_string(res.flagged.size()));
}

inline void score(CellRecord& r, const DenseMatrix& estimate, const DenseMatrix& truth, const DenseMatrix& eval) {
  r.rmse = rmse(estimate, truth, eval);
  r.epsilon = epsilon_metric(estimate, truth);
  if (!std::isfinite(r.rmse) || !std::isfinite(r.epsilon)) throw NumericError("non-finite metric");
}

inline dataio::MaskSpec seeded(dataio::MaskSpec m, std::uint64_t seed) {
  m.seed = stream_seed(seed, Stream::Mask);
  return m;
}

inline void run_completion_cell(CellRecord& r, const dataio::GroundTruth& gt, const Setting& s,
                                const models::ModelConfig& mcfg) {
  const dataio::ObservationSet obs = dataio::mask_columns(gt, seeded(s.mask, r.seed));
  const auto res = complete_with(r.method, obs, mcfg);
  fill_from(r, res);
  score(r, res.estimate, gt.values, unobserved(obs.mask));
}

inline void run_generation_cell(CellRecord& r, const dataio::GroundTruth& gt, const Setting& s,
                                const models::ModelConfig& mcfg) {
  const std::size_t m = gt.n_columns();
  if (m < kGenerationQueries + 2) {
    throw ParameterError("generation needs at least " + std::to_string(kGenerationQueries + 2) + " columns");
  }
  numkit::Rng rng(stream_seed(r.seed, Stream::Holdout));
  std::vector<std::size_t> held_idx = rng.sample_without_replacement(m - 2, kGenerationQueries);
  for (auto& j : held_idx) ++j;  // endpoints stay in the training span
  std::sort(held_idx.begin(), held_idx.end());
  const auto [kept, held] = dataio::split_columns(gt, held_idx);
  const dataio::ObservationSet obs = dataio::mask_columns(kept, seeded(s.mask, r.seed));

  DenseMatrix est(gt.n_subareas(), held.n_columns());
  const auto start = std::chrono::steady_clock::now();
  if (r.method == "linear") {
    std::size_t flagged = 0;
    for (std::size_t q = 0; q < held.n_columns(); ++q) {
      const auto p = baselines::linear_predict(obs, held.times[q]);
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        est(i, q) = p.values[i];
        flagged += p.flagged[i] ? 1 : 0;
      }
    }
    if (flagged > 0) r.flags.push_back("fallback cells " + std::to_string(flagged));
    r.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  } else {
    const auto qr = models::query_many(obs, mcfg, held.times, models::parse_model_kind(r.method));
    est = qr.estimate;
    r.epochs = qr.report.epochs;
    r.ms = qr.report.wall_ms;
    r.param_count = qr.report.param_count;
  }
  score(r, est, held.values, DenseMatrix(held.n_subareas(), held.n_columns(), 1.0));
}

// Time-discrete methods see the merged unit grid; TIME-DMF sees the raw
// submissions. Both are scored on the raw timeline.
inline void run_discrete_cell(CellRecord& r, const dataio::GroundTruth& gt, const Setting& s,
                              const models::ModelConfig& mcfg) {
  const dataio::ObservationSet obs = dataio::mask_columns(gt, seeded(s.mask, r.seed));
  DenseMatrix est;
  if (r.method == "time-dmf") {
    const auto res = complete_with(r.method, obs, mcfg);
    fill_from(r, res);
    est = res.estimate;
    r.flags.push_back("continuous");
  } else {
    const auto d = dataio::discretize_merge(obs, s.unit_length);
    const auto merged = dataio::discrete_as_observation_set(d, obs);
    const auto res = complete_with(r.method, merged, mcfg);
    fill_from(r, res);
    est = dataio::expand_discrete_estimate(d, res.estimate);
    r.flags.push_back("discrete units " + std::to_string(d.units));
  }
  score(r, est, gt.values, unobserved(obs.mask));
}

}  // namespace detail

// Runs one (method, setting, seed) cell. Failures are recorded, not thrown.
inline CellRecord run_cell(const ExperimentConfig& cfg, const DatasetSource& data, const std::string& method,
                           const Setting& s, std::uint64_t seed) {
  CellRecord r;
  r.scenario = to_string(cfg.scenario);
  r.dataset = cfg.dataset.label();
  r.method = method;
  r.setting = s.label;
  r.x = s.x;
  r.seed = seed;
  try {
    models::ModelConfig mcfg = cfg.model;
    mcfg.seed = stream_seed(seed, Stream::Model);
    if (cfg.scenario == Scenario::GradCheck) {
      const auto start = std::chrono::steady_clock::now();
      const auto g = gradient_check(models::parse_model_kind(method), seed);
      r.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      r.grad_rel_error = g.max_rel_error;
      r.rmse = g.rmse;
      r.epsilon = g.epsilon;
      r.param_count = g.param_count;
      r.flags.push_back("worst " + g.worst);
      return r;
    }
    dataio::GroundTruth gt = data.instance(seed);
    if (cfg.scenario == Scenario::DeletionAblation) {
      gt = dataio::delete_columns(gt, s.delete_ratio, stream_seed(seed, Stream::Delete));
    }
    switch (cfg.scenario) {
      case Scenario::SparsitySweep:
      case Scenario::DeletionAblation:
        detail::run_completion_cell(r, gt, s, mcfg);
        break;
      case Scenario::Generation:
        detail::run_generation_cell(r, gt, s, mcfg);
        break;
      case Scenario::DiscreteVsContinuous:
        detail::run_discrete_cell(r, gt, s, mcfg);
        break;
      case Scenario::GradCheck:
        break;
    }
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
    r.rmse = std::numeric_limits<double>::quiet_NaN();
    r.epsilon = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

inline std::size_t thread_cap() {
  if (const char* env = std::getenv("CONTIN_SENSE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct CellKey {
  std::size_t setting;
  std::size_t method;
  std::size_t seed;
};

inline std::vector<CellKey> cell_keys(const ExperimentConfig& cfg, std::size_t n_settings) {
  std::vector<CellKey> keys;
  for (std::size_t s = 0; s < n_settings; ++s)
    for (std::size_t m = 0; m < cfg.methods.size(); ++m)
      for (std::size_t q = 0; q < cfg.seeds.size(); ++q) keys.push_back({s, m, q});
  return keys;
}

// Every (setting, method, seed) cell, in that nesting order, then written to
// cfg.out_dir when one is set.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const DatasetSource data(cfg);
  const auto settings = settings_of(cfg);
  const auto keys = cell_keys(cfg, settings.size());

  ExperimentResult res;
  res.scenario = to_string(cfg.scenario);
  res.dataset = cfg.dataset.label();
  res.evaluation = cfg.scenario == Scenario::GradCheck      ? "analytic vs central-difference gradients"
                   : cfg.scenario == Scenario::Generation ? "all cells of the held-out columns"
                                                          : "cells not observed by the sensing mask";
  res.records.resize(keys.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < keys.size(); c = next++) {
      const CellKey& k = keys[c];
      res.records[c] = run_cell(cfg, data, cfg.methods[k.method], settings[k.setting], cfg.seeds[k.seed]);
    }
  };
  const std::size_t threads = std::min(thread_cap(), keys.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (!cfg.out_dir.empty()) emit_results(res, cfg.out_dir);
  return res;
}

}  // namespace continsense::harness
