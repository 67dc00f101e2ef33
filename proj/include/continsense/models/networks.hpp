#pragma once

#include <cstddef>
#include <vector>

#include "continsense/errors.hpp"
#include "continsense/numkit/matrix.hpp"
#include "continsense/numkit/tape.hpp"

namespace continsense::models {

using numkit::DenseMatrix;
using numkit::Tape;
using numkit::Var;

// ---------------------------------------------------------------------------
// Tape-level building blocks. Both training and the plain value functions
// below go through these.
// ---------------------------------------------------------------------------

struct DecoderVars {
  std::vector<Var> weights;  // layer k: out_k x in_k
  std::vector<Var> biases;   // layer k: out_k x 1
  std::vector<ActivationKind> activations;
};

// g_{K+1}(W_{K+1} ... g_1(W_1 z + b_1) ... + b_{K+1}); `z` may hold several
// columns, each decoded independently.
inline Var decode(const DecoderVars& dec, Var z) {
  if (dec.weights.size() != dec.biases.size() || dec.weights.size() != dec.activations.size() || dec.weights.empty()) {
    throw ConfigError("decoder: weights, biases and activations must be non-empty and of equal length");
  }
  Var h = z;
  for (std::size_t k = 0; k < dec.weights.size(); ++k) {
    if (dec.weights[k].cols() != h.rows()) {
      throw ConfigError("decoder: layer " + std::to_string(k) + " expects input width " +
                        std::to_string(dec.weights[k].cols()) + ", got " + std::to_string(h.rows()));
    }
    h = numkit::activate(dec.activations[k], matmul(dec.weights[k], h) + dec.biases[k]);
  }
  return h;
}

struct RnnVars {
  Var u;   // hidden x r
  Var w;   // hidden x hidden
  Var v;   // r x hidden
  Var s0;  // hidden x 1
};

// S_t = tanh(U x_t + W S_{t-1}),  z_t = V S_t.
inline std::vector<Var> rnn_encode(const std::vector<Var>& xs, const RnnVars& p) {
  std::vector<Var> z;
  z.reserve(xs.size());
  Var s = p.s0;
  for (const Var& x : xs) {
    s = numkit::tanh(matmul(p.u, x) + matmul(p.w, s));
    z.push_back(matmul(p.v, s));
  }
  return z;
}

struct TimeGateVars {
  Var u, w, v;          // candidate and output projections
  Var wx1, wt1, b1;     // local-memory gate: hidden x r, hidden x 1, hidden x 1
  Var wx2, wt2, b2;     // global-memory gate
  Var local0, global0;  // initial memories, hidden x 1
};

struct TimeEncodeTrace {
  std::vector<Var> z;
  std::vector<Var> local;   // C~_t
  std::vector<Var> global;  // C_t
  std::vector<Var> gate_local;
  std::vector<Var> gate_global;
  std::vector<Var> candidate;
};

// T = sigmoid(W_x x + sigmoid(dt / tau * W_t) + b)
inline Var time_gate(Var x, Var wx, Var wt, Var b, double dt_over_tau) {
  return numkit::sigmoid(matmul(wx, x) + numkit::sigmoid(dt_over_tau * wt) + b);
}

// Per step m, with dt_m the interval before step m:
//   T1 = gate(x_m, W_x1, W_t1, b_1),  T2 = gate(x_m, W_x2, W_t2, b_2)
//   a_m  = tanh(U x_m + W C~_{m-1})
//   C~_m = tanh(C_{m-1} .* T1 + a_m .* (1 - T1))
//   C_m  = tanh(C_{m-1} .* T2 + a_m .* (1 - T2))
//   z_m  = tanh(V C~_m)
inline TimeEncodeTrace time_encode(const std::vector<Var>& xs, const std::vector<double>& dt_over_tau,
                                   const TimeGateVars& p) {
  if (xs.size() != dt_over_tau.size()) throw DimensionError("time_encode: one interval per step required");
  TimeEncodeTrace tr;
  Var local = p.local0, global = p.global0;
  for (std::size_t m = 0; m < xs.size(); ++m) {
    const Var& x = xs[m];
    Var t1 = time_gate(x, p.wx1, p.wt1, p.b1, dt_over_tau[m]);
    Var t2 = time_gate(x, p.wx2, p.wt2, p.b2, dt_over_tau[m]);
    Var a = numkit::tanh(matmul(p.u, x) + matmul(p.w, local));
    Var next_local = numkit::tanh(hadamard(global, t1) + hadamard(a, one_minus(t1)));
    Var next_global = numkit::tanh(hadamard(global, t2) + hadamard(a, one_minus(t2)));
    local = next_local;
    global = next_global;
    tr.z.push_back(numkit::tanh(matmul(p.v, local)));
    tr.local.push_back(local);
    tr.global.push_back(global);
    tr.gate_local.push_back(t1);
    tr.gate_global.push_back(t2);
    tr.candidate.push_back(a);
  }
  return tr;
}

// Interval before each step: dt_1 is the mean gap of the instance, dt_m =
// t_m - t_{m-1} otherwise.
inline std::vector<double> step_intervals(const std::vector<double>& times) {
  for (std::size_t j = 1; j < times.size(); ++j) {
    if (!(times[j] > times[j - 1])) {
      throw InputError("time_encode: times not strictly increasing at column " + std::to_string(j));
    }
  }
  std::vector<double> dt(times.size());
  if (times.empty()) return dt;
  dt[0] = times.size() > 1 ? (times.back() - times.front()) / static_cast<double>(times.size() - 1) : 1.0;
  for (std::size_t j = 1; j < times.size(); ++j) dt[j] = times[j] - times[j - 1];
  return dt;
}

// ---------------------------------------------------------------------------
// Plain value interfaces.
// ---------------------------------------------------------------------------

struct DecoderWeights {
  std::vector<DenseMatrix> weights;
  std::vector<DenseMatrix> biases;
  std::vector<ActivationKind> activations;
};

struct RnnWeights {
  DenseMatrix u, w, v;
};

struct TimeGateWeights {
  DenseMatrix u, w, v;
  DenseMatrix wx1, wt1, b1;
  DenseMatrix wx2, wt2, b2;
};

// Primary latent vectors x_1..x_M plus initial states for either encoder.
struct LatentPath {
  std::vector<DenseMatrix> x;
  DenseMatrix s0;       // RNN
  DenseMatrix local0;   // TIME
  DenseMatrix global0;  // TIME
};

inline DecoderVars constants(Tape& t, const DecoderWeights& w) {
  DecoderVars d;
  for (const auto& m : w.weights) d.weights.push_back(t.constant(m));
  for (const auto& b : w.biases) d.biases.push_back(t.constant(b));
  d.activations = w.activations;
  return d;
}

inline DenseMatrix dmf_decode(const DenseMatrix& z, const DecoderWeights& w) {
  Tape t;
  return decode(constants(t, w), t.constant(z)).value();
}

inline std::vector<DenseMatrix> rnn_encode(const LatentPath& path, const RnnWeights& w) {
  Tape t;
  std::vector<Var> xs;
  for (const auto& x : path.x) xs.push_back(t.constant(x));
  const RnnVars p{t.constant(w.u), t.constant(w.w), t.constant(w.v), t.constant(path.s0)};
  std::vector<DenseMatrix> out;
  for (const Var& z : rnn_encode(xs, p)) out.push_back(z.value());
  return out;
}

struct TimeEncodeValues {
  std::vector<DenseMatrix> z, local, global, gate_local, gate_global, candidate;
};

inline TimeEncodeValues time_encode(const LatentPath& path, const std::vector<double>& times, const TimeGateWeights& w,
                                    double tau) {
  if (!(tau > 0.0)) throw ParameterError("time_encode: tau must be positive");
  if (path.x.size() != times.size()) throw DimensionError("time_encode: path and times differ in length");
  std::vector<double> scaled = step_intervals(times);
  for (double& d : scaled) d /= tau;
  Tape t;
  std::vector<Var> xs;
  for (const auto& x : path.x) xs.push_back(t.constant(x));
  const TimeGateVars p{t.constant(w.u),   t.constant(w.w),   t.constant(w.v),           t.constant(w.wx1),
                       t.constant(w.wt1), t.constant(w.b1),  t.constant(w.wx2),         t.constant(w.wt2),
                       t.constant(w.b2),  t.constant(path.local0), t.constant(path.global0)};
  const TimeEncodeTrace tr = time_encode(xs, scaled, p);
  TimeEncodeValues out;
  auto grab = [](const std::vector<Var>& vs, std::vector<DenseMatrix>& dst) {
    for (const Var& v : vs) dst.push_back(v.value());
  };
  grab(tr.z, out.z);
  grab(tr.local, out.local);
  grab(tr.global, out.global);
  grab(tr.gate_local, out.gate_local);
  grab(tr.gate_global, out.gate_global);
  grab(tr.candidate, out.candidate);
  return out;
}

}  // namespace continsense::models
