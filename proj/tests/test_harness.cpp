#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "continsense/harness/config.hpp"
#include "continsense/harness/emit.hpp"
#include "continsense/harness/experiment.hpp"
#include "continsense/harness/metrics.hpp"

using namespace continsense;
using namespace continsense::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("continsense_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

DenseMatrix random_matrix(std::size_t r, std::size_t c, numkit::Rng& rng) {
  DenseMatrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-3.0, 3.0);
  return m;
}

json small_config(const std::string& scenario, std::vector<std::string> methods) {
  return {{"scenario", scenario},
          {"dataset", {{"synthetic", {{"kind", "smooth-field"}, {"n", 6}, {"m", 30}, {"seed", 3}}}}},
          {"methods", methods},
          {"mask", {{"mode", "keep_k"}, {"k", {1, 2}}}},
          {"model", {{"latent_dim", 2}, {"hidden_dim", 3}, {"decoder_layers", {6}}, {"max_epochs", 40}}},
          {"seeds", {0, 1}}};
}

struct Exec {
  int code = -1;
  std::string out;
};

Exec run_cli(const std::string& args) {
  const std::string cmd = std::string(CONTINSENSE_CLI_PATH) + " " + args + " 2>&1";
  Exec e;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return e;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe) != nullptr) e.out += buf;
  const int status = pclose(pipe);
  e.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return e;
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST(Metrics, RmseIdentityIsZero) {
  numkit::Rng rng(1);
  const auto a = random_matrix(3, 4, rng);
  EXPECT_EQ(rmse(a, a), 0.0);
}

TEST(Metrics, RmseUnitErrors) {
  const DenseMatrix truth(2, 2);
  const DenseMatrix est(2, 2, {1, -1, 1, -1});
  EXPECT_DOUBLE_EQ(rmse(est, truth, DenseMatrix(2, 2, 1.0)), 1.0);
}

TEST(Metrics, RmseMatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    numkit::Rng rng(seed);
    const auto a = random_matrix(5, 5, rng), b = random_matrix(5, 5, rng);
    DenseMatrix mask(5, 5);
    for (std::size_t i = 0; i < 25; ++i) mask[i] = rng.uniform01() < 0.5 ? 1.0 : 0.0;
    mask(0, 0) = 1.0;
    double se = 0;
    int n = 0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        if (mask(i, j) == 1.0) {
          se += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
          ++n;
        }
    EXPECT_NEAR(rmse(a, b, mask), std::sqrt(se / n), 1e-12);
  }
}

TEST(Metrics, RmseOnlyScoresSelectedCells) {
  const DenseMatrix truth(1, 3, {0, 0, 0});
  const DenseMatrix est(1, 3, {100, 2, 100});
  EXPECT_DOUBLE_EQ(rmse(est, truth, DenseMatrix(1, 3, {0, 1, 0})), 2.0);
}

TEST(Metrics, EmptyEvalMaskIsAnError) {
  EXPECT_THROW(rmse(DenseMatrix(2, 2), DenseMatrix(2, 2), DenseMatrix(2, 2)), MetricError);
}

TEST(Metrics, ShapeMismatchIsAnError) {
  EXPECT_THROW(rmse(DenseMatrix(2, 2), DenseMatrix(2, 3)), DimensionError);
  EXPECT_THROW(epsilon_metric(DenseMatrix(2, 2), DenseMatrix(3, 2)), DimensionError);
}

TEST(Metrics, EpsilonValues) {
  const DenseMatrix a(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(epsilon_metric(a, a), 0.0);
  EXPECT_EQ(epsilon_metric(a, DenseMatrix(2, 2, {1, 0, 3, 4})), 2.0);
}

TEST(Metrics, EpsilonMatchesLoopOracle) {
  numkit::Rng rng(4);
  const auto a = random_matrix(4, 7, rng), b = random_matrix(4, 7, rng);
  double s = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 7; ++j) s += std::abs(a(i, j) - b(i, j));
  EXPECT_NEAR(epsilon_metric(a, b), s, 1e-12);
}

TEST(Metrics, UnobservedIsTheMaskComplement) {
  const auto e = unobserved(DenseMatrix(1, 3, {1, 0, 1}));
  EXPECT_EQ(e, DenseMatrix(1, 3, {0, 1, 0}));
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(Config, ParsesEveryKey) {
  const json j = {{"scenario", "discrete-vs-continuous"},
                  {"dataset", {{"synthetic", {{"kind", "seasonal"}, {"n", 12}, {"m", 90}, {"span_seconds", 3600.0}, {"seed", 9}}}}},
                  {"methods", {"time-dmf", "gp"}},
                  {"mask", {{"mode", "keep_k"}, {"k", 2}}},
                  {"delete_ratios", {0.1, 0.2}},
                  {"unit_length_seconds", 600},
                  {"model",
                   {{"latent_dim", 3},
                    {"hidden_dim", 5},
                    {"decoder_layers", {7, 9}},
                    {"lr", 0.005},
                    {"max_epochs", 11},
                    {"tol", 1e-6},
                    {"tau_mode", "unit"}}},
                  {"seeds", {4, 5}},
                  {"out_dir", "results/x"}};
  const auto c = parse_experiment_config(j);
  EXPECT_EQ(c.scenario, Scenario::DiscreteVsContinuous);
  ASSERT_TRUE(c.dataset.synthetic);
  EXPECT_EQ(c.dataset.synthetic->kind, dataio::SyntheticKind::Seasonal);
  EXPECT_EQ(c.dataset.synthetic->n, 12u);
  EXPECT_EQ(c.dataset.synthetic->m, 90u);
  EXPECT_EQ(c.dataset.synthetic->span_seconds, 3600.0);
  EXPECT_EQ(c.dataset.synthetic->seed, 9u);
  EXPECT_EQ(c.methods, (std::vector<std::string>{"time-dmf", "gp"}));
  EXPECT_EQ(c.mask.ks, (std::vector<std::size_t>{2}));
  EXPECT_EQ(c.delete_ratios, (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(c.unit_lengths, (std::vector<double>{600}));
  EXPECT_EQ(c.model.latent_dim, 3u);
  EXPECT_EQ(c.model.hidden_dim, 5u);
  ASSERT_EQ(c.model.decoder_layers.size(), 2u);
  EXPECT_EQ(c.model.decoder_layers[1].width, 9u);
  EXPECT_EQ(c.model.lr, 0.005);
  EXPECT_EQ(c.model.max_epochs, 11);
  EXPECT_EQ(c.model.tol, 1e-6);
  EXPECT_EQ(c.model.tau_mode, models::TauMode::Unit);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(c.out_dir, fs::path("results/x"));
}

TEST(Config, EmptyMethodListIsAConfigError) {
  json j = small_config("sparsity-sweep", {});
  EXPECT_THROW(parse_experiment_config(j), ConfigError);
}

TEST(Config, RejectsInvalidConfigs) {
  auto bad = [](auto mutate) {
    json j = small_config("sparsity-sweep", {"dmf"});
    mutate(j);
    return j;
  };
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["seeds"] = json::array(); })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["bogus"] = 1; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["model"]["dropout"] = 0.5; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["methods"] = {"dmf", "dmf"}; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["methods"] = {"svd"}; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["methods"] = {"linear"}; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["scenario"] = "no-such-scenario"; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["delete_ratios"] = {1.0}; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["mask"]["k"] = 7; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["mask"]["mode"] = "random"; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["model"]["lr"] = -1; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["model"]["latent_dim"] = "two"; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j.erase("dataset"); })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["dataset"]["path"] = "x.csv"; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["scenario"] = "deletion-ablation"; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) { j["scenario"] = "discrete-vs-continuous"; })), ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) {
                 j["scenario"] = "gradcheck";
                 j["methods"] = {"gp"};
               })),
               ConfigError);
  EXPECT_THROW(parse_experiment_config(bad([](json& j) {
                 j["scenario"] = "generation";
                 j["methods"] = {"knn-s"};
               })),
               ConfigError);
}

TEST(Config, RelativeDatasetPathResolvesAgainstConfigDir) {
  json j = small_config("sparsity-sweep", {"gp"});
  j["dataset"] = {{"path", "data/grid.csv"}};
  const auto c = parse_experiment_config(j, "/etc/exp");
  EXPECT_EQ(*c.dataset.path, fs::path("/etc/exp/data/grid.csv"));
}

TEST(Config, SettingsEnumerateTheSweep) {
  json j = small_config("deletion-ablation", {"rnn-dmf"});
  j["mask"]["k"] = 1;
  j["delete_ratios"] = {0.5, 0.9};
  auto s = settings_of(parse_experiment_config(j));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].label, "delete=0.5");
  EXPECT_EQ(s[1].delete_ratio, 0.9);
  j["mask"]["k"] = {1, 2};
  s = settings_of(parse_experiment_config(j));
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[3].label, "delete=0.9,k=2");
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

namespace {

ExperimentResult sample_result() {
  ExperimentResult res;
  res.scenario = "sparsity-sweep";
  res.dataset = "smooth-field";
  res.evaluation = "cells not observed by the sensing mask";
  CellRecord a;
  a.scenario = res.scenario;
  a.dataset = res.dataset;
  a.method = "dmf";
  a.setting = "k=1";
  a.x = 1.0;
  a.seed = 3;
  a.rmse = 0.1 + 0.2;
  a.epsilon = 1.0 / 3.0;
  a.epochs = 17;
  a.ms = 12.5;
  a.param_count = 99;
  a.flags = {"shrinkage 0.1"};
  CellRecord b = a;
  b.method = "gp";
  b.grad_rel_error = 3.7e-9;
  CellRecord c = a;
  c.method = "mc";
  c.ok = false;
  c.error = "training diverged";
  c.rmse = std::numeric_limits<double>::quiet_NaN();
  c.epsilon = std::numeric_limits<double>::quiet_NaN();
  res.records = {a, b, c};
  return res;
}

bool same_number(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

TEST(Emit, SingleCellGivesOneRecordAndOneRow) {
  auto res = sample_result();
  res.records.resize(1);
  const auto dir = scratch_dir("single");
  emit_results(res, dir);
  const auto j = json::parse(slurp(dir / "results.json"));
  EXPECT_EQ(j["records"].size(), 1u);
  EXPECT_EQ(count_lines(slurp(dir / "summary.csv")), 2u);
  EXPECT_TRUE(fs::exists(dir / "plotdata" / "sparsity-sweep.csv"));
}

TEST(Emit, RoundTripReproducesRecords) {
  const auto res = sample_result();
  const auto dir = scratch_dir("roundtrip");
  emit_results(res, dir);
  const auto back = result_from_json(ordered_json::parse(slurp(dir / "results.json")));
  EXPECT_EQ(back.scenario, res.scenario);
  EXPECT_EQ(back.evaluation, res.evaluation);
  ASSERT_EQ(back.records.size(), res.records.size());
  for (std::size_t q = 0; q < res.records.size(); ++q) {
    const auto &a = res.records[q], &b = back.records[q];
    EXPECT_EQ(a.method, b.method);
    EXPECT_EQ(a.setting, b.setting);
    EXPECT_EQ(a.seed, b.seed);
    EXPECT_EQ(a.ok, b.ok);
    EXPECT_EQ(a.error, b.error);
    EXPECT_TRUE(same_number(a.rmse, b.rmse));
    EXPECT_TRUE(same_number(a.epsilon, b.epsilon));
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.epochs, b.epochs);
    EXPECT_EQ(a.ms, b.ms);
    EXPECT_EQ(a.param_count, b.param_count);
    EXPECT_EQ(a.grad_rel_error, b.grad_rel_error);
    EXPECT_EQ(a.flags, b.flags);
  }
}

TEST(Emit, SummaryParsesBackAndSkipsFailures) {
  const auto res = sample_result();
  const auto csv = summary_csv(res);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "scenario,dataset,method,setting,seed,rmse,epsilon,epochs,ms");
  std::getline(in, line);
  EXPECT_EQ(line, "sparsity-sweep,smooth-field,dmf,\"k=1\",3,0.30000000000000004,0.3333333333333333,17,12.5");
  EXPECT_EQ(count_lines(csv), 1 + res.records.size() - res.failures());
}

TEST(Emit, RepeatedEmissionIsByteIdentical) {
  const auto res = sample_result();
  const auto d1 = scratch_dir("bytes1"), d2 = scratch_dir("bytes2");
  emit_results(res, d1);
  emit_results(res, d2);
  emit_results(res, d2);  // overwrite in place
  for (const char* f : {"results.json", "summary.csv", "plotdata/sparsity-sweep.csv"}) {
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
  for (const auto& e : fs::recursive_directory_iterator(d2)) {
    EXPECT_NE(e.path().extension(), ".tmp") << e.path();
  }
}

TEST(Emit, PlotDataAggregatesSeeds) {
  ExperimentResult res = sample_result();
  res.records.resize(1);
  CellRecord r2 = res.records[0];
  r2.seed = 4;
  r2.rmse = 0.5;
  res.records.push_back(r2);
  const auto csv = plot_csv(res);
  EXPECT_NE(csv.find("dmf,\"k=1\",1,2,0.4"), std::string::npos) << csv;
}

TEST(Emit, UnwritableDirectoryReportsThePath) {
  const auto dir = scratch_dir("blocked");
  write_file(dir / "file", "x");
  try {
    emit_results(sample_result(), dir / "file" / "sub");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("file"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

TEST(Experiment, GradcheckScenarioIsBelowTolerance) {
  json j = {{"scenario", "gradcheck"}, {"methods", {"dmf", "rnn-dmf", "time-dmf"}}, {"seeds", {0, 1, 2}}};
  const auto res = run_experiment(parse_experiment_config(j));
  ASSERT_EQ(res.records.size(), 9u);
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.ok) << r.error;
    ASSERT_TRUE(r.grad_rel_error);
    EXPECT_LT(*r.grad_rel_error, 1e-4) << r.method << " seed " << r.seed;
    EXPECT_TRUE(std::isfinite(r.rmse));
  }
}

TEST(Experiment, SparsitySweepWritesOneRowPerCell) {
  json j = small_config("sparsity-sweep", {"dmf", "knn-s", "gp", "mc"});
  const auto dir = scratch_dir("sweep");
  j["out_dir"] = dir.string();
  const auto res = run_experiment(parse_experiment_config(j));
  ASSERT_EQ(res.records.size(), 2u * 4u * 2u);
  EXPECT_EQ(res.failures(), 0u);
  for (const auto& r : res.records) {
    EXPECT_TRUE(std::isfinite(r.rmse) && std::isfinite(r.epsilon)) << r.method;
    EXPECT_GE(r.rmse, 0.0);
  }
  EXPECT_EQ(count_lines(slurp(dir / "summary.csv")), 1u + res.records.size());
  EXPECT_EQ(res.records[0].setting, "k=1");
  EXPECT_EQ(res.records[0].method, "dmf");
  EXPECT_EQ(res.records[1].seed, 1u);
}

TEST(Experiment, EmittedMetricsMatchLoopOracle) {
  json j = small_config("sparsity-sweep", {"knn-s"});
  const auto cfg = parse_experiment_config(j);
  const auto res = run_experiment(cfg);
  const DatasetSource data(cfg);
  const auto settings = settings_of(cfg);
  for (const auto& r : res.records) {
    const auto& s = *std::find_if(settings.begin(), settings.end(), [&](const Setting& x) { return x.label == r.setting; });
    const auto gt = data.instance(r.seed);
    auto spec = s.mask;
    spec.seed = stream_seed(r.seed, Stream::Mask);
    const auto obs = dataio::mask_columns(gt, spec);
    const auto est = baselines::knn_s_complete(obs, kKnnNeighbors, baselines::spatial_index(obs)).estimate;
    double se = 0, abs_sum = 0;
    int n = 0;
    for (std::size_t i = 0; i < gt.n_subareas(); ++i)
      for (std::size_t c = 0; c < gt.n_columns(); ++c) {
        const double d = est(i, c) - gt.values(i, c);
        abs_sum += std::abs(d);
        if (obs.mask(i, c) == 0.0) {
          se += d * d;
          ++n;
        }
      }
    EXPECT_NEAR(r.rmse, std::sqrt(se / n), 1e-12);
    EXPECT_NEAR(r.epsilon, abs_sum, 1e-9);
  }
}

TEST(Experiment, CellRerunInIsolationIsIdentical) {
  json j = small_config("sparsity-sweep", {"dmf", "time-dmf", "mc"});
  const auto full = run_experiment(parse_experiment_config(j));
  const CellRecord& target = full.records[full.records.size() - 2];  // k=2, mc, seed 0
  json one = j;
  one["methods"] = {target.method};
  one["mask"]["k"] = {2};
  one["seeds"] = {target.seed};
  const auto alone = run_experiment(parse_experiment_config(one));
  ASSERT_EQ(alone.records.size(), 1u);
  EXPECT_EQ(alone.records[0].rmse, target.rmse);
  EXPECT_EQ(alone.records[0].epsilon, target.epsilon);
  EXPECT_EQ(alone.records[0].epochs, target.epochs);
}

TEST(Experiment, ThreadCountDoesNotChangeResults) {
  json j = small_config("sparsity-sweep", {"rnn-dmf", "gp"});
  setenv("CONTIN_SENSE_THREADS", "1", 1);
  const auto serial = run_experiment(parse_experiment_config(j));
  setenv("CONTIN_SENSE_THREADS", "3", 1);
  const auto parallel = run_experiment(parse_experiment_config(j));
  unsetenv("CONTIN_SENSE_THREADS");
  ASSERT_EQ(serial.records.size(), parallel.records.size());
  for (std::size_t q = 0; q < serial.records.size(); ++q) {
    EXPECT_EQ(serial.records[q].method, parallel.records[q].method);
    EXPECT_EQ(serial.records[q].rmse, parallel.records[q].rmse);
    EXPECT_EQ(serial.records[q].epsilon, parallel.records[q].epsilon);
  }
}

TEST(Experiment, DeletionAblationShrinksTheInstance) {
  json j = small_config("deletion-ablation", {"rnn-dmf", "time-dmf"});
  j["mask"]["k"] = 1;
  j["delete_ratios"] = {0.0, 0.5};
  const auto res = run_experiment(parse_experiment_config(j));
  ASSERT_EQ(res.records.size(), 8u);
  EXPECT_EQ(res.failures(), 0u);
  EXPECT_EQ(res.records[0].setting, "delete=0");
  EXPECT_EQ(res.records.back().setting, "delete=0.5");
  EXPECT_GT(res.records.front().param_count, res.records.back().param_count);
}

TEST(Experiment, GenerationComparesQueryWithLinear) {
  json j = small_config("generation", {"time-dmf", "linear"});
  j["mask"]["k"] = 2;
  const auto res = run_experiment(parse_experiment_config(j));
  ASSERT_EQ(res.records.size(), 4u);
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.ok) << r.method << ": " << r.error;
    EXPECT_TRUE(std::isfinite(r.rmse));
  }
}

TEST(Experiment, GenerationNeedsEnoughColumns) {
  json j = small_config("generation", {"linear"});
  j["dataset"]["synthetic"]["m"] = 15;
  const auto res = run_experiment(parse_experiment_config(j));
  for (const auto& r : res.records) EXPECT_FALSE(r.ok);
}

TEST(Experiment, DiscreteArmUsesMergedUnits) {
  json j = small_config("discrete-vs-continuous", {"time-dmf", "dmf", "mc", "knn-s", "gp"});
  j["mask"]["k"] = 1;
  j["unit_length_seconds"] = 7.0 * 86400.0 / 10.0;
  const auto res = run_experiment(parse_experiment_config(j));
  ASSERT_EQ(res.records.size(), 10u);
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.ok) << r.method << ": " << r.error;
    const bool continuous = std::find(r.flags.begin(), r.flags.end(), "continuous") != r.flags.end();
    EXPECT_EQ(continuous, r.method == "time-dmf");
    if (!continuous) {
      EXPECT_TRUE(std::any_of(r.flags.begin(), r.flags.end(), [](const std::string& f) { return f.rfind("discrete units ", 0) == 0; }))
          << r.method;
    }
  }
}

TEST(Experiment, CellFailuresAreRecordedAndTheRunContinues) {
  const auto dir = scratch_dir("failures");
  write_file(dir / "grid.csv", "time,a,b,c\n0,1,2,3\n1,2,3,4\n2,3,4,5\n3,4,5,7\n");
  json j = small_config("sparsity-sweep", {"gp"});
  j["dataset"] = {{"path", (dir / "grid.csv").string()}};
  j["mask"]["k"] = {1, 4};  // 4 > N: these cells fail
  j["out_dir"] = (dir / "out").string();
  const auto res = run_experiment(parse_experiment_config(j));
  ASSERT_EQ(res.records.size(), 4u);
  EXPECT_EQ(res.failures(), 2u);
  EXPECT_TRUE(res.records[0].ok);
  EXPECT_FALSE(res.records[3].ok);
  EXPECT_NE(res.records[3].error.find("exceeds"), std::string::npos);
  EXPECT_EQ(count_lines(slurp(dir / "out" / "summary.csv")), 1u + 2u);
}

TEST(Experiment, SparseDatasetFileIsRejected) {
  const auto dir = scratch_dir("sparsefile");
  write_file(dir / "grid.csv", "time,a,b\n0,1,\n1,,2\n");
  json j = small_config("sparsity-sweep", {"gp"});
  j["dataset"] = {{"path", (dir / "grid.csv").string()}};
  EXPECT_THROW(run_experiment(parse_experiment_config(j)), ConfigError);
}

TEST(Experiment, SeedStreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 50; ++s)
    for (Stream st : {Stream::Data, Stream::Mask, Stream::Delete, Stream::Holdout, Stream::Model})
      seen.insert(stream_seed(s, st));
  EXPECT_EQ(seen.size(), 250u);
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

TEST(Cli, GradcheckPrintsErrorAndSucceeds) {
  const auto e = run_cli("gradcheck --model dmf --seed 7");
  EXPECT_EQ(e.code, 0) << e.out;
  const auto pos = e.out.find("max relative error ");
  ASSERT_NE(pos, std::string::npos) << e.out;
  EXPECT_LT(std::stod(e.out.substr(pos + 19)), 1e-4);
}

TEST(Cli, MissingRequiredFlagShowsUsage) {
  const auto e = run_cli("gradcheck --model dmf");
  EXPECT_EQ(e.code, 1);
  EXPECT_NE(e.out.find("Usage"), std::string::npos) << e.out;
}

TEST(Cli, UnknownFlagOrSubcommandIsUsageError) {
  EXPECT_EQ(run_cli("gradcheck --model dmf --seed 1 --frobnicate").code, 1);
  EXPECT_EQ(run_cli("train").code, 1);
  EXPECT_EQ(run_cli("").code, 1);
  EXPECT_EQ(run_cli("gradcheck --model lstm --seed 1").code, 1);
}

TEST(Cli, QueryOutsideSpanIsRangeError) {
  const auto dir = scratch_dir("cli_query");
  write_file(dir / "g.csv", "time,a,b\n0,1,\n10,,2\n20,1.5,\n");
  const auto e = run_cli("query --input " + (dir / "g.csv").string() + " --at 25");
  EXPECT_EQ(e.code, 1);
  EXPECT_NE(e.out.find("outside"), std::string::npos) << e.out;
  EXPECT_EQ(run_cli("query --input " + (dir / "g.csv").string() + " --at 0").code, 0);
}

TEST(Cli, QueryPrintsGeneratedColumn) {
  const auto dir = scratch_dir("cli_query2");
  write_file(dir / "g.csv", "time,a,b\n0,1,\n10,,2\n20,3,\n30,,4\n");
  const auto e = run_cli("query --input " + (dir / "g.csv").string() + " --at 15 --method linear");
  EXPECT_EQ(e.code, 0) << e.out;
  EXPECT_EQ(e.out, "area_id,value\na,2.5\nb,2.5\n");
}

TEST(Cli, CompleteWritesEstimateAndReport) {
  const auto dir = scratch_dir("cli_complete");
  write_file(dir / "g.csv", "time,a,b,c\n0,1,,2\n10,,2,\n25,1.5,,\n40,,,3\n");
  write_file(dir / "m.json", R"({"model": {"latent_dim": 2, "hidden_dim": 3, "decoder_layers": [4], "max_epochs": 30}})");
  const auto e = run_cli("complete --input " + (dir / "g.csv").string() + " --method time-dmf --config " +
                         (dir / "m.json").string() + " --out " + (dir / "out").string());
  EXPECT_EQ(e.code, 0) << e.out;
  const auto grid = dataio::load_grid_csv(dir / "out" / "estimate.csv");
  ASSERT_TRUE(std::holds_alternative<dataio::GroundTruth>(grid));
  EXPECT_EQ(std::get<dataio::GroundTruth>(grid).values.shape(), "3x4");
  const auto rep = json::parse(slurp(dir / "out" / "report.json"));
  EXPECT_EQ(rep["method"], "time-dmf");
  EXPECT_EQ(rep["observed_cells"], 5);
}

TEST(Cli, ConfigAndRuntimeErrorsMapToExitCodes) {
  const auto dir = scratch_dir("cli_errors");
  write_file(dir / "g.csv", "time,a,b\n0,1,\n10,,2\n");
  write_file(dir / "bad.json", R"({"latent_dim": 0})");
  EXPECT_EQ(run_cli("complete --input " + (dir / "g.csv").string() + " --method dmf --config " +
                    (dir / "bad.json").string() + " --out " + (dir / "o").string())
                .code,
            1);
  EXPECT_EQ(run_cli("complete --input " + (dir / "missing.csv").string() + " --method gp --out " + (dir / "o").string())
                .code,
            2);
}

TEST(Cli, ExperimentWithEmptyMethodsWritesNothing) {
  const auto dir = scratch_dir("cli_empty");
  json j = small_config("sparsity-sweep", {});
  j["out_dir"] = (dir / "out").string();
  write_file(dir / "e.json", j.dump());
  const auto e = run_cli("experiment --config " + (dir / "e.json").string());
  EXPECT_EQ(e.code, 1);
  EXPECT_NE(e.out.find("methods"), std::string::npos) << e.out;
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Cli, ExperimentRunsAndEmits) {
  const auto dir = scratch_dir("cli_exp");
  json j = small_config("sparsity-sweep", {"gp", "knn-s"});
  j["out_dir"] = "out";
  write_file(dir / "e.json", j.dump());
  const auto e = run_cli("experiment --config " + (dir / "e.json").string() + " --out " + (dir / "o2").string());
  EXPECT_EQ(e.code, 0) << e.out;
  EXPECT_TRUE(fs::exists(dir / "o2" / "results.json"));
  EXPECT_EQ(count_lines(slurp(dir / "o2" / "summary.csv")), 1u + 8u);
}
