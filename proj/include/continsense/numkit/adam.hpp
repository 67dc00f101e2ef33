#pragma once

#include <cmath>
#include <map>

#include "continsense/errors.hpp"
#include "continsense/numkit/params.hpp"

namespace continsense::numkit {

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  long step = 0;
  std::map<ParamId, DenseMatrix> first_moment;
  std::map<ParamId, DenseMatrix> second_moment;

  OptimizerState() = default;
  explicit OptimizerState(AdamConfig cfg) : config(cfg) {}
};

// One bias-corrected Adam update of every trainable parameter.
inline void adam_step(OptimizerState& state, ParamStore& params, const GradientMap& grads) {
  for (const Parameter& p : params) {
    if (!p.trainable) continue;
    auto it = grads.find(p.id);
    if (it == grads.end()) throw InputError("adam_step: missing gradient for trainable parameter '" + p.name + "'");
    require_same_shape(it->second, p.value, "adam_step");
  }
  ++state.step;
  const AdamConfig& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    const DenseMatrix& g = grads.at(p.id);
    auto [m_it, m_new] = state.first_moment.try_emplace(p.id, p.value.rows(), p.value.cols());
    auto [v_it, v_new] = state.second_moment.try_emplace(p.id, p.value.rows(), p.value.cols());
    DenseMatrix& m = m_it->second;
    DenseMatrix& v = v_it->second;
    if (!m.same_shape(p.value)) {
      throw DimensionError("adam_step: accumulator shape " + m.shape() + " does not match parameter '" + p.name + "'");
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

// Plain gradient descent; used where monotone loss traces are wanted.
inline void sgd_step(double lr, ParamStore& params, const GradientMap& grads) {
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    auto it = grads.find(p.id);
    if (it == grads.end()) throw InputError("sgd_step: missing gradient for trainable parameter '" + p.name + "'");
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * it->second[i];
  }
}

}  // namespace continsense::numkit
