#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "continsense/dataio/observation.hpp"
#include "continsense/errors.hpp"
#include "continsense/models/config.hpp"
#include "continsense/models/networks.hpp"
#include "continsense/numkit/params.hpp"
#include "continsense/numkit/random.hpp"

namespace continsense::models {

using numkit::ParamId;
using numkit::ParamStore;

// Parameter ids of one model instance. Latents are listed in column order;
// after a query insertion the new latent's id is spliced in at its column.
struct ModelLayout {
  std::vector<ParamId> dec_w, dec_b;
  std::vector<ActivationKind> dec_act;
  std::vector<ParamId> latents;
  // RNN-DMF
  std::optional<ParamId> s0;
  // RNN-DMF and TIME-DMF
  std::optional<ParamId> u, w, v;
  // TIME-DMF
  std::optional<ParamId> wx1, wt1, b1, wx2, wt2, b2, local0, global0;
};

struct Model {
  ModelKind kind = ModelKind::TimeDmf;
  ModelConfig cfg;
  std::size_t n = 0;
  std::vector<double> times;
  double tau = 1.0;
  ParamStore store;
  ModelLayout layout;
  std::uint64_t insert_draws = 0;  // how many latents have been inserted; seeds their init
};

// Width of every decoder layer input and output: r -> h_1 -> ... -> N.
inline std::vector<std::size_t> decoder_widths(const ModelConfig& cfg, std::size_t n) {
  std::vector<std::size_t> w{cfg.latent_dim};
  for (const auto& l : cfg.decoder_layers) w.push_back(l.width);
  w.push_back(n);
  return w;
}

// Trainable scalar count from shapes alone.
inline std::size_t closed_form_param_count(ModelKind kind, const ModelConfig& cfg, std::size_t n, std::size_t m) {
  const std::size_t r = cfg.latent_dim, h = cfg.hidden_dim;
  const auto widths = decoder_widths(cfg, n);
  std::size_t count = 0;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) count += widths[k] * widths[k + 1] + widths[k + 1];
  count += r * m;
  if (kind == ModelKind::RnnDmf) count += h * r + h * h + r * h + h;
  if (kind == ModelKind::TimeDmf) count += h * r + h * h + r * h + 2 * (h * r + h + h) + 2 * h;
  return count;
}

inline double tau_for(TauMode mode, const std::vector<double>& times) {
  if (mode == TauMode::Unit || times.size() < 2) return 1.0;
  const double gap = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  return gap > 0.0 ? gap : 1.0;
}

inline numkit::DenseMatrix init_latent(std::size_t r, numkit::Rng& rng) {
  return numkit::init_params(r, 1, {numkit::InitScheme::Uniform, 0.1}, rng);
}

// Parameters are drawn from one stream seeded by cfg.seed in a fixed order:
// decoder layers, encoder weights, initial states, then latents by column.
inline Model build_model(ModelKind kind, const ModelConfig& cfg, std::size_t n, const std::vector<double>& times) {
  cfg.validate();
  if (n < 1) throw ConfigError("model: output width N must be >= 1");
  if (times.empty()) throw InputError("model: at least one column required");
  dataio::require_strictly_increasing(times, "model");
  Model model;
  model.kind = kind;
  model.cfg = cfg;
  model.n = n;
  model.times = times;
  model.tau = tau_for(cfg.tau_mode, times);

  numkit::Rng rng(cfg.seed);
  const numkit::InitSpec xavier{numkit::InitScheme::XavierUniform, 0.0};
  const numkit::InitSpec small{numkit::InitScheme::Uniform, 0.1};
  ParamStore& s = model.store;
  ModelLayout& l = model.layout;

  const auto widths = decoder_widths(cfg, n);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const std::string tag = std::to_string(k + 1);
    l.dec_w.push_back(s.add("dec.W" + tag, numkit::init_params(widths[k + 1], widths[k], xavier, rng)));
    l.dec_b.push_back(s.add("dec.b" + tag, numkit::DenseMatrix(widths[k + 1], 1)));
    l.dec_act.push_back(k + 2 < widths.size() ? cfg.decoder_layers[k].activation : cfg.output_activation);
  }

  const std::size_t r = cfg.latent_dim, h = cfg.hidden_dim;
  if (kind != ModelKind::Dmf) {
    l.u = s.add("enc.U", numkit::init_params(h, r, xavier, rng));
    l.w = s.add("enc.W", numkit::init_params(h, h, xavier, rng));
    l.v = s.add("enc.V", numkit::init_params(r, h, xavier, rng));
  }
  if (kind == ModelKind::TimeDmf) {
    l.wx1 = s.add("gate1.Wx", numkit::init_params(h, r, xavier, rng));
    l.wt1 = s.add("gate1.Wt", numkit::init_params(h, 1, xavier, rng));
    l.b1 = s.add("gate1.b", numkit::DenseMatrix(h, 1));
    l.wx2 = s.add("gate2.Wx", numkit::init_params(h, r, xavier, rng));
    l.wt2 = s.add("gate2.Wt", numkit::init_params(h, 1, xavier, rng));
    l.b2 = s.add("gate2.b", numkit::DenseMatrix(h, 1));
    l.local0 = s.add("state.local0", numkit::init_params(h, 1, small, rng));
    l.global0 = s.add("state.global0", numkit::init_params(h, 1, small, rng));
  }
  if (kind == ModelKind::RnnDmf) l.s0 = s.add("state.S0", numkit::init_params(h, 1, small, rng));

  for (std::size_t j = 0; j < times.size(); ++j) {
    l.latents.push_back(s.add("x" + std::to_string(j), init_latent(r, rng)));
  }
  return model;
}

// Z = [z_1 ... z_M] on the tape.
inline Var encode(Tape& tape, const Model& model) {
  const ModelLayout& l = model.layout;
  auto p = [&](ParamId id) { return tape.param(model.store, id); };
  std::vector<Var> xs;
  xs.reserve(l.latents.size());
  for (ParamId id : l.latents) xs.push_back(p(id));
  switch (model.kind) {
    case ModelKind::Dmf:
      return tape.concat_cols(xs);
    case ModelKind::RnnDmf:
      return tape.concat_cols(rnn_encode(xs, RnnVars{p(*l.u), p(*l.w), p(*l.v), p(*l.s0)}));
    case ModelKind::TimeDmf: {
      std::vector<double> scaled = step_intervals(model.times);
      for (double& d : scaled) d /= model.tau;
      const TimeGateVars g{p(*l.u),   p(*l.w),  p(*l.v),   p(*l.wx1),    p(*l.wt1),    p(*l.b1),
                           p(*l.wx2), p(*l.wt2), p(*l.b2), p(*l.local0), p(*l.global0)};
      return tape.concat_cols(time_encode(xs, scaled, g).z);
    }
  }
  throw ConfigError("model: unknown kind");
}

// Y^ = f(Z), normalized units.
inline Var forward(Tape& tape, const Model& model) {
  const ModelLayout& l = model.layout;
  DecoderVars dec;
  for (ParamId id : l.dec_w) dec.weights.push_back(tape.param(model.store, id));
  for (ParamId id : l.dec_b) dec.biases.push_back(tape.param(model.store, id));
  dec.activations = l.dec_act;
  return decode(dec, encode(tape, model));
}

inline numkit::DenseMatrix estimate(const Model& model) {
  Tape tape;
  return forward(tape, model).value();
}

inline numkit::DenseMatrix latent_matrix(const Model& model) {
  Tape tape;
  return encode(tape, model).value();
}

// Index where t belongs in sorted `times`, and whether it is already present.
inline std::pair<std::size_t, bool> insertion_point(const std::vector<double>& times, double t) {
  if (times.size() < 2 || !(t > times.front() && t < times.back())) {
    if (!times.empty() && (t == times.front() || t == times.back())) {
      return {t == times.front() ? 0 : times.size() - 1, true};
    }
    throw RangeError("query time " + std::to_string(t) + " outside the observed span (t_1, t_M)");
  }
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  const auto k = static_cast<std::size_t>(it - times.begin());
  return {k, *it == t};
}

// Adds a column at t to the model: a fresh latent at the sorted position. The
// latent is drawn from a stream derived from the seed and insertion count.
// Returns the column index; an existing timestamp leaves the model unchanged.
inline std::size_t insert_column(Model& model, double t, bool trainable = true) {
  const auto [k, present] = insertion_point(model.times, t);
  if (present) return k;
  numkit::Rng rng(model.cfg.seed ^ (0xD1B54A32D192ED03ULL * (++model.insert_draws)));
  const ParamId id = model.store.add("xq" + std::to_string(model.insert_draws), init_latent(model.cfg.latent_dim, rng),
                                     trainable);
  model.times.insert(model.times.begin() + static_cast<std::ptrdiff_t>(k), t);
  model.layout.latents.insert(model.layout.latents.begin() + static_cast<std::ptrdiff_t>(k), id);
  return k;
}

}  // namespace continsense::models
