#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "continsense/dataio/protocols.hpp"
#include "continsense/dataio/synthetic.hpp"
#include "continsense/errors.hpp"
#include "continsense/models/config.hpp"

namespace continsense::harness {

using json = nlohmann::json;

enum class Scenario { SparsitySweep, DeletionAblation, Generation, DiscreteVsContinuous, GradCheck };

inline Scenario parse_scenario(const std::string& s) {
  if (s == "sparsity-sweep") return Scenario::SparsitySweep;
  if (s == "deletion-ablation") return Scenario::DeletionAblation;
  if (s == "generation") return Scenario::Generation;
  if (s == "discrete-vs-continuous") return Scenario::DiscreteVsContinuous;
  if (s == "gradcheck") return Scenario::GradCheck;
  throw ConfigError("unknown scenario '" + s +
                    "' (expected sparsity-sweep|deletion-ablation|generation|discrete-vs-continuous|gradcheck)");
}

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::SparsitySweep: return "sparsity-sweep";
    case Scenario::DeletionAblation: return "deletion-ablation";
    case Scenario::Generation: return "generation";
    case Scenario::DiscreteVsContinuous: return "discrete-vs-continuous";
    case Scenario::GradCheck: return "gradcheck";
  }
  return "?";
}

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"dmf", "rnn-dmf", "time-dmf", "mc", "knn-s", "gp", "linear"};
  return m;
}

inline bool is_model_method(const std::string& m) { return m == "dmf" || m == "rnn-dmf" || m == "time-dmf"; }

struct SyntheticSpec {
  dataio::SyntheticKind kind = dataio::SyntheticKind::SmoothField;
  std::size_t n = 30;
  std::size_t m = 300;
  double span_seconds = 7.0 * 86400.0;
  std::uint64_t seed = 0;
};

struct DatasetSpec {
  std::optional<std::filesystem::path> path;
  std::optional<SyntheticSpec> synthetic;

  std::string label() const {
    if (path) return path->stem().string();
    if (synthetic) return std::string(dataio::to_string(synthetic->kind));
    return "random";
  }
};

// One sensing setting per entry of k (keep_k) or ratio (keep_ratio).
struct MaskConfig {
  dataio::MaskSpec::Mode mode = dataio::MaskSpec::Mode::KeepK;
  std::vector<std::size_t> ks{1};
  std::vector<double> ratios;

  std::size_t size() const { return mode == dataio::MaskSpec::Mode::KeepK ? ks.size() : ratios.size(); }
};

struct ExperimentConfig {
  Scenario scenario = Scenario::SparsitySweep;
  DatasetSpec dataset;
  std::vector<std::string> methods;
  MaskConfig mask;
  std::vector<double> delete_ratios;
  std::vector<double> unit_lengths;  // seconds
  models::ModelConfig model;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;

  void validate() const;
};

namespace detail {

inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

// A scalar or an array of scalars.
template <class T>
std::vector<T> get_list(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  try {
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline models::ModelConfig parse_model_config(const json& j, models::ModelConfig cfg = {}) {
  const std::string w = "model";
  detail::only_keys(j, {"latent_dim", "hidden_dim", "decoder_layers", "lr", "max_epochs", "tol", "tau_mode"}, w);
  if (j.contains("latent_dim")) cfg.latent_dim = detail::get<std::size_t>(j, "latent_dim", w);
  if (j.contains("hidden_dim")) cfg.hidden_dim = detail::get<std::size_t>(j, "hidden_dim", w);
  if (j.contains("decoder_layers")) {
    cfg.decoder_layers.clear();
    for (std::size_t width : detail::get<std::vector<std::size_t>>(j, "decoder_layers", w))
      cfg.decoder_layers.push_back({width, numkit::ActivationKind::Tanh});
  }
  if (j.contains("lr")) cfg.lr = detail::get<double>(j, "lr", w);
  if (j.contains("max_epochs")) cfg.max_epochs = detail::get<int>(j, "max_epochs", w);
  if (j.contains("tol")) cfg.tol = detail::get<double>(j, "tol", w);
  if (j.contains("tau_mode")) cfg.tau_mode = models::parse_tau_mode(detail::get<std::string>(j, "tau_mode", w));
  cfg.validate();
  return cfg;
}

inline json model_config_json(const models::ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["latent_dim"] = cfg.latent_dim;
  j["hidden_dim"] = cfg.hidden_dim;
  std::vector<std::size_t> widths;
  for (const auto& l : cfg.decoder_layers) widths.push_back(l.width);
  j["decoder_layers"] = widths;
  j["lr"] = cfg.lr;
  j["max_epochs"] = cfg.max_epochs;
  j["tol"] = cfg.tol;
  j["tau_mode"] = models::to_string(cfg.tau_mode);
  return j;
}

inline void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("config: methods must not be empty");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    const auto& known = known_methods();
    if (std::find(known.begin(), known.end(), m) == known.end()) {
      throw ConfigError("config: unknown method '" + m + "' (expected dmf|rnn-dmf|time-dmf|mc|knn-s|gp|linear)");
    }
    if (!seen.insert(m).second) throw ConfigError("config: method '" + m + "' listed twice");
    if (m == "linear" && scenario != Scenario::Generation) {
      throw ConfigError("config: method 'linear' only applies to the generation scenario");
    }
    if (scenario == Scenario::Generation && m != "linear" && !is_model_method(m)) {
      throw ConfigError("config: method '" + m + "' cannot generate columns at unobserved times");
    }
    if (scenario == Scenario::GradCheck && !is_model_method(m)) {
      throw ConfigError("config: gradcheck applies to dmf|rnn-dmf|time-dmf, not '" + m + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
  if (scenario != Scenario::GradCheck) {
    if (!dataset.path && !dataset.synthetic) throw ConfigError("config: dataset needs a path or a synthetic spec");
    if (mask.size() == 0) throw ConfigError("config: mask needs at least one k or ratio");
    for (std::size_t k : mask.ks)
      if (k < 1) throw ConfigError("config: mask k must be >= 1");
    for (double r : mask.ratios)
      if (!(r > 0.0 && r <= 1.0)) throw ConfigError("config: mask ratio must be in (0, 1]");
    if (dataset.synthetic && mask.mode == dataio::MaskSpec::Mode::KeepK) {
      for (std::size_t k : mask.ks)
        if (k > dataset.synthetic->n) throw ConfigError("config: mask k exceeds the number of subareas");
    }
  }
  if (dataset.synthetic) {
    if (dataset.synthetic->n < 2 || dataset.synthetic->m < 2) throw ConfigError("config: synthetic n and m must be >= 2");
    if (!(dataset.synthetic->span_seconds > 0.0)) throw ConfigError("config: synthetic span_seconds must be positive");
  }
  for (double r : delete_ratios)
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("config: delete ratios must be in [0, 1)");
  if (scenario == Scenario::DeletionAblation && delete_ratios.empty()) {
    throw ConfigError("config: deletion-ablation needs delete_ratios");
  }
  for (double l : unit_lengths)
    if (!(l > 0.0)) throw ConfigError("config: unit_length_seconds must be positive");
  if (scenario == Scenario::DiscreteVsContinuous && unit_lengths.empty()) {
    throw ConfigError("config: discrete-vs-continuous needs unit_length_seconds");
  }
  model.validate();
}

// A relative dataset path resolves against base_dir; out_dir is used as given.
inline ExperimentConfig parse_experiment_config(const json& j, const std::filesystem::path& base_dir = {}) {
  detail::only_keys(j,
                    {"scenario", "dataset", "methods", "mask", "delete_ratios", "unit_length_seconds", "model",
                     "seeds", "out_dir"},
                    "config");
  ExperimentConfig c;
  if (!j.contains("scenario")) throw ConfigError("config: missing 'scenario'");
  c.scenario = parse_scenario(detail::get<std::string>(j, "scenario", "config"));
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    detail::only_keys(d, {"path", "synthetic"}, "dataset");
    if (d.contains("path") == d.contains("synthetic")) throw ConfigError("dataset: give exactly one of path, synthetic");
    if (d.contains("path")) {
      std::filesystem::path p = detail::get<std::string>(d, "path", "dataset");
      c.dataset.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    } else {
      const json& s = d.at("synthetic");
      const std::string w = "dataset.synthetic";
      detail::only_keys(s, {"kind", "n", "m", "span_seconds", "seed"}, w);
      SyntheticSpec spec;
      if (s.contains("kind")) spec.kind = dataio::parse_synthetic_kind(detail::get<std::string>(s, "kind", w));
      if (s.contains("n")) spec.n = detail::get<std::size_t>(s, "n", w);
      if (s.contains("m")) spec.m = detail::get<std::size_t>(s, "m", w);
      if (s.contains("span_seconds")) spec.span_seconds = detail::get<double>(s, "span_seconds", w);
      if (s.contains("seed")) spec.seed = detail::get<std::uint64_t>(s, "seed", w);
      c.dataset.synthetic = spec;
    }
  }
  if (!j.contains("methods")) throw ConfigError("config: missing 'methods'");
  c.methods = detail::get<std::vector<std::string>>(j, "methods", "config");
  if (j.contains("mask")) {
    const json& m = j.at("mask");
    detail::only_keys(m, {"mode", "k", "ratio"}, "mask");
    const std::string mode = m.contains("mode") ? detail::get<std::string>(m, "mode", "mask") : "keep_k";
    if (mode == "keep_k") {
      c.mask.mode = dataio::MaskSpec::Mode::KeepK;
      if (!m.contains("k")) throw ConfigError("mask: keep_k needs 'k'");
      c.mask.ks = detail::get_list<std::size_t>(m, "k", "mask");
    } else if (mode == "keep_ratio") {
      c.mask.mode = dataio::MaskSpec::Mode::KeepRatio;
      if (!m.contains("ratio")) throw ConfigError("mask: keep_ratio needs 'ratio'");
      c.mask.ks.clear();
      c.mask.ratios = detail::get_list<double>(m, "ratio", "mask");
    } else {
      throw ConfigError("mask: unknown mode '" + mode + "' (expected keep_k|keep_ratio)");
    }
  }
  if (j.contains("delete_ratios")) c.delete_ratios = detail::get_list<double>(j, "delete_ratios", "config");
  if (j.contains("unit_length_seconds")) c.unit_lengths = detail::get_list<double>(j, "unit_length_seconds", "config");
  if (j.contains("model")) c.model = parse_model_config(j.at("model"));
  if (!j.contains("seeds")) throw ConfigError("config: missing 'seeds'");
  c.seeds = detail::get_list<std::uint64_t>(j, "seeds", "config");
  if (j.contains("out_dir")) c.out_dir = detail::get<std::string>(j, "out_dir", "config");
  c.validate();
  return c;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_json_file(path), path.parent_path());
}

}  // namespace continsense::harness
