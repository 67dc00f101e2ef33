#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>

#include "continsense/dataio/observation.hpp"
#include "continsense/errors.hpp"
#include "continsense/models/train.hpp"
#include "continsense/numkit/adam.hpp"
#include "continsense/numkit/random.hpp"
#include "continsense/numkit/tape.hpp"

namespace continsense::baselines {

using models::CompletionResult;
using numkit::DenseMatrix;

struct McConfig {
  std::size_t rank = 4;
  enum class Optimizer { Adam, GradientDescent };
  Optimizer optimizer = Optimizer::Adam;
  double lr = 1e-2;
  int max_epochs = 5000;
  double tol = 1e-7;
  int patience = 50;
  double init_scale = 0.5;
  std::uint64_t seed = 0;
};

// Linear matrix completion Y ~ P Z, P: N x r, Z: r x M, fitted on the raw
// observed values.
inline CompletionResult mc_complete(const dataio::ObservationSet& obs, const McConfig& cfg) {
  dataio::validate(obs);
  if (cfg.rank < 1) throw ConfigError("mc: rank must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("mc: lr must be positive");
  if (cfg.max_epochs < 1 || cfg.patience < 1) throw ConfigError("mc: max_epochs and patience must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  numkit::Rng rng(cfg.seed);
  const numkit::InitSpec init{numkit::InitScheme::Uniform, cfg.init_scale};
  numkit::ParamStore store;
  const auto p_id = store.add("P", numkit::init_params(obs.n_subareas(), cfg.rank, init, rng));
  const auto z_id = store.add("Z", numkit::init_params(cfg.rank, obs.n_columns(), init, rng));
  numkit::AdamConfig adam;
  adam.lr = cfg.lr;
  numkit::OptimizerState opt(adam);

  CompletionResult res;
  auto& rep = res.report;
  numkit::Tape tape;
  double last_finite = std::numeric_limits<double>::quiet_NaN();
  auto loss_now = [&] {
    tape.reset();
    return tape.masked_loss(matmul(tape.param(store, p_id), tape.param(store, z_id)), obs.values, obs.mask);
  };
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    numkit::Var loss = loss_now();
    const double l = loss.value()(0, 0);
    if (!std::isfinite(l)) {
      throw TrainingError("mc: non-finite loss at epoch " + std::to_string(epoch), epoch - 1, last_finite);
    }
    last_finite = l;
    rep.loss_trace.push_back(l);
    if (l == 0.0 || models::plateaued(rep.loss_trace, cfg.patience, cfg.tol)) {
      rep.converged = true;
      break;
    }
    const auto grads = tape.gradients(loss, store);
    if (cfg.optimizer == McConfig::Optimizer::Adam) {
      numkit::adam_step(opt, store, grads);
    } else {
      numkit::sgd_step(cfg.lr, store, grads);
    }
    ++rep.epochs;
  }
  rep.final_loss = loss_now().value()(0, 0);
  if (!std::isfinite(rep.final_loss)) throw TrainingError("mc: non-finite loss after the last update", rep.epochs, last_finite);
  rep.param_count = store.trainable_scalar_count();
  res.estimate = numkit::matmul(store[p_id].value, store[z_id].value);
  res.latent = store[z_id].value;
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace continsense::baselines
