#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "continsense/errors.hpp"
#include "continsense/numkit/tape.hpp"

namespace continsense::models {

using numkit::ActivationKind;

enum class ModelKind { Dmf, RnnDmf, TimeDmf };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Dmf: return "dmf";
    case ModelKind::RnnDmf: return "rnn-dmf";
    case ModelKind::TimeDmf: return "time-dmf";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "dmf") return ModelKind::Dmf;
  if (s == "rnn-dmf") return ModelKind::RnnDmf;
  if (s == "time-dmf") return ModelKind::TimeDmf;
  throw ConfigError("unknown model kind '" + s + "' (expected dmf|rnn-dmf|time-dmf)");
}

// How the interval squashing sigma_dt(x) = sigmoid(x / tau) picks tau.
enum class TauMode { MeanGap, Unit };

inline TauMode parse_tau_mode(const std::string& s) {
  if (s == "mean_gap") return TauMode::MeanGap;
  if (s == "unit") return TauMode::Unit;
  throw ConfigError("unknown tau_mode '" + s + "' (expected mean_gap|unit)");
}

inline const char* to_string(TauMode t) { return t == TauMode::MeanGap ? "mean_gap" : "unit"; }

struct LayerSpec {
  std::size_t width = 0;
  ActivationKind activation = ActivationKind::Tanh;
};

struct ModelConfig {
  std::size_t latent_dim = 8;   // r
  std::size_t hidden_dim = 32;  // encoder state width
  // Hidden decoder layers between the latent and the N-wide output layer.
  std::vector<LayerSpec> decoder_layers{{64, ActivationKind::Tanh}};
  ActivationKind output_activation = ActivationKind::Identity;
  TauMode tau_mode = TauMode::MeanGap;
  double lr = 1e-2;
  int max_epochs = 3000;
  double tol = 1e-5;
  int patience = 20;
  std::uint64_t seed = 0;
  // Query training resumes from a completed model instead of starting over.
  bool warm_start = false;

  void validate() const {
    if (latent_dim < 1) throw ConfigError("model: latent_dim must be >= 1");
    if (hidden_dim < 1) throw ConfigError("model: hidden_dim must be >= 1");
    for (const auto& l : decoder_layers)
      if (l.width < 1) throw ConfigError("model: decoder layer widths must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("model: lr must be positive");
    if (max_epochs < 1) throw ConfigError("model: max_epochs must be >= 1");
    if (!(tol >= 0.0)) throw ConfigError("model: tol must be >= 0");
    if (patience < 1) throw ConfigError("model: patience must be >= 1");
  }
};

}  // namespace continsense::models
