// continsense: sparse spatiotemporal completion on a continuous timeline.
//
//   continsense complete --input grid.csv --method time-dmf [--config c.json] --out dir/
//   continsense query --input grid.csv --at <seconds> [--method time-dmf] [--config c.json]
//   continsense experiment --config e.json [--out dir/]
//   continsense gradcheck --model <dmf|rnn-dmf|time-dmf> --seed <s>
//
// Exit status: 0 success, 1 usage/config/range error, 2 runtime failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include "continsense/dataio/csv.hpp"
#include "continsense/harness/config.hpp"
#include "continsense/harness/emit.hpp"
#include "continsense/harness/experiment.hpp"
#include "continsense/models/train.hpp"

namespace fs = std::filesystem;
using namespace continsense;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

dataio::ObservationSet load_observations(const fs::path& input, const std::optional<fs::path>& coords) {
  auto grid = dataio::load_grid_csv(input, coords);
  if (auto* obs = std::get_if<dataio::ObservationSet>(&grid)) return std::move(*obs);
  const auto& gt = std::get<dataio::GroundTruth>(grid);
  return dataio::observe(gt, numkit::DenseMatrix(gt.n_subareas(), gt.n_columns(), 1.0));
}

// Either a bare model object or a document with a "model" member.
models::ModelConfig load_model_config(const std::string& path, std::uint64_t seed) {
  models::ModelConfig cfg;
  if (!path.empty()) {
    const auto j = harness::read_json_file(path);
    cfg = harness::parse_model_config(j.contains("model") ? j.at("model") : j);
  }
  cfg.seed = seed;
  return cfg;
}

int run_complete(const std::string& input, const std::string& coords, const std::string& method,
                 const std::string& config, const std::string& out_dir, std::uint64_t seed) {
  if (method == "linear") throw ConfigError("complete: 'linear' is a generation method; use query");
  const auto known = harness::known_methods();
  if (std::find(known.begin(), known.end(), method) == known.end()) {
    throw ConfigError("complete: unknown method '" + method + "'");
  }
  const auto cfg = load_model_config(config, seed);
  const auto obs = load_observations(input, coords.empty() ? std::nullopt : std::optional<fs::path>(coords));
  const auto res = harness::complete_with(method, obs, cfg);

  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  std::ostringstream grid;
  dataio::write_grid_csv(grid, res.estimate, obs.times, obs.area_ids);
  harness::write_atomically(dir / "estimate.csv", grid.str());

  nlohmann::ordered_json rep;
  rep["method"] = method;
  rep["input"] = input;
  rep["subareas"] = obs.n_subareas();
  rep["columns"] = obs.n_columns();
  rep["observed_cells"] = obs.observed_count();
  rep["epochs"] = res.report.epochs;
  rep["final_loss"] = res.report.final_loss;
  rep["converged"] = res.report.converged;
  rep["param_count"] = res.report.param_count;
  rep["wall_ms"] = res.report.wall_ms;
  rep["notes"] = res.report.notes;
  rep["fallback_cells"] = res.flagged.size();
  harness::write_atomically(dir / "report.json", rep.dump(2) + "\n");

  std::cout << method << ": completed " << obs.n_subareas() << "x" << obs.n_columns() << " in "
            << res.report.epochs << " epochs, wrote " << (dir / "estimate.csv").string() << "\n";
  return kOk;
}

int run_query(const std::string& input, const std::string& coords, double at, const std::string& method,
              const std::string& config, std::uint64_t seed) {
  const auto obs = load_observations(input, coords.empty() ? std::nullopt : std::optional<fs::path>(coords));
  std::vector<double> col;
  if (method == "linear") {
    models::insertion_point(obs.times, at);
    col = baselines::linear_predict(obs, at).values;
  } else {
    const auto cfg = load_model_config(config, seed);
    col = models::query(obs, cfg, at, models::parse_model_kind(method));
  }
  std::cout << "area_id,value\n";
  for (std::size_t i = 0; i < col.size(); ++i)
    std::cout << obs.area_ids[i] << ',' << dataio::detail::format_double(col[i]) << '\n';
  return kOk;
}

int run_experiment(const std::string& config, const std::string& out_dir) {
  auto cfg = harness::load_experiment_config(config);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (cfg.out_dir.empty()) throw ConfigError("experiment: no out_dir in the config and no --out given");
  const auto res = harness::run_experiment(cfg);
  std::cout << res.scenario << " on " << res.dataset << ": " << res.records.size() << " cells, " << res.failures()
            << " failed, results in " << cfg.out_dir.string() << "\n";
  for (const auto& r : res.records) {
    if (!r.ok) std::cerr << "  failed " << r.method << " " << r.setting << " seed " << r.seed << ": " << r.error << "\n";
  }
  return res.failures() == res.records.size() ? kRuntime : kOk;
}

int run_gradcheck(const std::string& model, std::uint64_t seed) {
  const auto kind = models::parse_model_kind(model);
  const auto g = harness::gradient_check(kind, seed);
  std::printf("%s seed %llu: max relative error %.3e over %zu coordinates (worst %s)\n", model.c_str(),
              static_cast<unsigned long long>(seed), g.max_rel_error, g.coordinates, g.worst.c_str());
  return g.max_rel_error <= 1e-4 ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse spatiotemporal completion on a continuous timeline", "continsense"};
  app.require_subcommand(1);

  std::string input, coords, method = "time-dmf", config, out_dir, model;
  std::uint64_t seed = 0;
  double at = 0.0;

  auto* complete = app.add_subcommand("complete", "complete a sparse grid CSV");
  complete->add_option("--input", input, "grid CSV (time,<area>...; empty cells are unobserved)")->required();
  complete->add_option("--coords", coords, "area_id,x,y CSV");
  complete->add_option("--method", method, "dmf|rnn-dmf|time-dmf|mc|knn-s|gp")->required();
  complete->add_option("--config", config, "model config JSON");
  complete->add_option("--out", out_dir, "output directory")->required();
  complete->add_option("--seed", seed, "initialization seed");

  auto* query = app.add_subcommand("query", "generate the column at an unobserved time");
  query->add_option("--input", input, "grid CSV")->required();
  query->add_option("--coords", coords, "area_id,x,y CSV");
  query->add_option("--at", at, "query time in seconds, strictly inside the observed span")->required();
  query->add_option("--method", method, "dmf|rnn-dmf|time-dmf|linear");
  query->add_option("--config", config, "model config JSON");
  query->add_option("--seed", seed, "initialization seed");

  auto* experiment = app.add_subcommand("experiment", "run an experiment config");
  experiment->add_option("--config", config, "experiment JSON")->required();
  experiment->add_option("--out", out_dir, "overrides out_dir");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check on a small random instance");
  gradcheck->add_option("--model", model, "dmf|rnn-dmf|time-dmf")->required();
  gradcheck->add_option("--seed", seed, "instance seed")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return kUsage;
  }

  try {
    if (*complete) return run_complete(input, coords, method, config, out_dir, seed);
    if (*query) return run_query(input, coords, at, method, config, seed);
    if (*experiment) return run_experiment(config, out_dir);
    if (*gradcheck) return run_gradcheck(model, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
