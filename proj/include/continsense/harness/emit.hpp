#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "continsense/dataio/csv.hpp"
#include "continsense/errors.hpp"

namespace continsense::harness {

struct CellRecord {
  std::string scenario;
  std::string dataset;
  std::string method;
  std::string setting;
  double x = 0.0;  // numeric value of the swept setting
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  double rmse = 0.0;
  double epsilon = 0.0;
  int epochs = 0;
  double ms = 0.0;
  std::size_t param_count = 0;
  std::optional<double> grad_rel_error;
  std::vector<std::string> flags;
};

struct ExperimentResult {
  std::string scenario;
  std::string dataset;
  std::string evaluation;
  std::vector<CellRecord> records;

  std::size_t failures() const {
    std::size_t f = 0;
    for (const auto& r : records) f += r.ok ? 0 : 1;
    return f;
  }
};

using ordered_json = nlohmann::ordered_json;

namespace detail {

// NaN and infinities have no JSON spelling; they are written as null.
inline ordered_json number(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

inline double number_of(const ordered_json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

inline ordered_json to_json(const CellRecord& r) {
  ordered_json j;
  j["scenario"] = r.scenario;
  j["dataset"] = r.dataset;
  j["method"] = r.method;
  j["setting"] = r.setting;
  j["x"] = detail::number(r.x);
  j["seed"] = r.seed;
  j["status"] = r.ok ? "ok" : "failed";
  j["rmse"] = detail::number(r.rmse);
  j["epsilon"] = detail::number(r.epsilon);
  j["epochs"] = r.epochs;
  j["ms"] = detail::number(r.ms);
  j["param_count"] = r.param_count;
  if (r.grad_rel_error) j["grad_rel_error"] = detail::number(*r.grad_rel_error);
  j["flags"] = r.flags;
  if (!r.ok) j["error"] = r.error;
  return j;
}

inline CellRecord record_from_json(const ordered_json& j) {
  CellRecord r;
  try {
    r.scenario = j.at("scenario").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.setting = j.at("setting").get<std::string>();
    r.x = detail::number_of(j.at("x"));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ok = j.at("status").get<std::string>() == "ok";
    r.rmse = detail::number_of(j.at("rmse"));
    r.epsilon = detail::number_of(j.at("epsilon"));
    r.epochs = j.at("epochs").get<int>();
    r.ms = detail::number_of(j.at("ms"));
    r.param_count = j.at("param_count").get<std::size_t>();
    if (j.contains("grad_rel_error")) r.grad_rel_error = detail::number_of(j.at("grad_rel_error"));
    r.flags = j.at("flags").get<std::vector<std::string>>();
    if (j.contains("error")) r.error = j.at("error").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("result record: ") + e.what());
  }
  return r;
}

inline ordered_json to_json(const ExperimentResult& res) {
  ordered_json j;
  j["scenario"] = res.scenario;
  j["dataset"] = res.dataset;
  j["evaluation"] = res.evaluation;
  j["cells"] = res.records.size();
  j["failures"] = res.failures();
  ordered_json recs = ordered_json::array();
  for (const auto& r : res.records) recs.push_back(to_json(r));
  j["records"] = std::move(recs);
  return j;
}

inline ExperimentResult result_from_json(const ordered_json& j) {
  ExperimentResult res;
  try {
    res.scenario = j.at("scenario").get<std::string>();
    res.dataset = j.at("dataset").get<std::string>();
    res.evaluation = j.at("evaluation").get<std::string>();
    for (const auto& r : j.at("records")) res.records.push_back(record_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("results: ") + e.what());
  }
  return res;
}

inline std::string summary_csv(const ExperimentResult& res) {
  using dataio::detail::format_double;
  std::ostringstream out;
  out << "scenario,dataset,method,setting,seed,rmse,epsilon,epochs,ms\n";
  for (const auto& r : res.records) {
    if (!r.ok) continue;
    out << r.scenario << ',' << r.dataset << ',' << r.method << ",\"" << r.setting << "\"," << r.seed << ','
        << format_double(r.rmse) << ',' << format_double(r.epsilon) << ',' << r.epochs << ',' << format_double(r.ms)
        << '\n';
  }
  return out.str();
}

// Seed-aggregated curve per method over the swept setting.
inline std::string plot_csv(const ExperimentResult& res) {
  using dataio::detail::format_double;
  struct Acc {
    std::string setting;
    double x = 0.0;
    std::vector<double> rmse, eps;
  };
  std::vector<std::string> methods;
  std::map<std::string, std::vector<Acc>> by_method;
  for (const auto& r : res.records) {
    if (!r.ok) continue;
    if (!by_method.count(r.method)) methods.push_back(r.method);
    auto& v = by_method[r.method];
    auto it = std::find_if(v.begin(), v.end(), [&](const Acc& a) { return a.setting == r.setting; });
    if (it == v.end()) {
      v.push_back({r.setting, r.x, {}, {}});
      it = std::prev(v.end());
    }
    it->rmse.push_back(r.rmse);
    it->eps.push_back(r.epsilon);
  }
  std::ostringstream out;
  out << "method,setting,x,seeds,mean_rmse,sd_rmse,mean_epsilon\n";
  for (const auto& m : methods) {
    for (const Acc& a : by_method[m]) {
      const auto n = static_cast<double>(a.rmse.size());
      double mean = 0.0, meps = 0.0;
      for (std::size_t q = 0; q < a.rmse.size(); ++q) {
        mean += a.rmse[q];
        meps += a.eps[q];
      }
      mean /= n;
      meps /= n;
      double ss = 0.0;
      for (double v : a.rmse) ss += (v - mean) * (v - mean);
      const double sd = a.rmse.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      out << m << ",\"" << a.setting << "\"," << format_double(a.x) << ',' << a.rmse.size() << ','
          << format_double(mean) << ',' << format_double(sd) << ',' << format_double(meps) << '\n';
    }
  }
  return out.str();
}

// Writes next to the target and renames over it.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    out.close();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace '" + path.string() + "': " + ec.message());
}

// results.json, summary.csv and plotdata/<scenario>.csv under dir.
inline void emit_results(const ExperimentResult& res, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "plotdata", ec);
  if (ec) throw IoError("cannot create '" + (dir / "plotdata").string() + "': " + ec.message());
  write_atomically(dir / "results.json", to_json(res).dump(2) + "\n");
  write_atomically(dir / "summary.csv", summary_csv(res));
  write_atomically(dir / "plotdata" / (res.scenario + ".csv"), plot_csv(res));
}

}  // namespace continsense::harness
