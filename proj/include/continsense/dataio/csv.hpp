#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "continsense/dataio/observation.hpp"
#include "continsense/errors.hpp"

namespace continsense::dataio {

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = line.find(',', start);
    if (p == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, p - start));
    start = p + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s, const std::string& where) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw FormatError(where + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

// Shortest text that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

struct GridCsv {
  std::vector<std::string> area_ids;
  std::vector<double> times;
  DenseMatrix values;  // N x M
  DenseMatrix mask;    // N x M, 1 where the field was non-empty
  bool dense = true;
};

// Parses `time,<area ids...>` rows; one row per timestamp, empty field =
// missing.
inline GridCsv parse_grid_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty file");
  auto header = detail::split_commas(line);
  if (header.size() < 2 || detail::trim(header[0]) != "time") {
    throw FormatError(source + ": header must be 'time,<area ids...>'");
  }
  GridCsv g;
  for (std::size_t c = 1; c < header.size(); ++c) g.area_ids.emplace_back(detail::trim(header[c]));
  const std::size_t n = g.area_ids.size();

  std::vector<std::vector<double>> cols;
  std::vector<std::vector<double>> masks;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_commas(line);
    const std::string where = source + " row " + std::to_string(row);
    if (fields.size() != n + 1) {
      throw FormatError(where + ": expected " + std::to_string(n + 1) + " fields, got " + std::to_string(fields.size()));
    }
    const double t = detail::parse_double(fields[0], where);
    if (!g.times.empty() && !(t > g.times.back())) throw FormatError(where + ": time is not strictly increasing");
    g.times.push_back(t);
    std::vector<double> col(n, 0.0), m(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (detail::trim(fields[i + 1]).empty()) {
        g.dense = false;
        continue;
      }
      col[i] = detail::parse_double(fields[i + 1], where);
      m[i] = 1.0;
    }
    cols.push_back(std::move(col));
    masks.push_back(std::move(m));
  }
  const std::size_t m = g.times.size();
  if (m == 0) throw FormatError(source + ": no data rows");
  g.values = DenseMatrix(n, m);
  g.mask = DenseMatrix(n, m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      g.values(i, j) = cols[j][i];
      g.mask(i, j) = masks[j][i];
    }
  return g;
}

// `area_id,x,y`, matched to the grid's area ids.
inline Coordinates parse_coords_csv(std::istream& in, const std::vector<std::string>& area_ids,
                                    const std::string& source = "<coords>") {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty file");
  auto header = detail::split_commas(line);
  if (header.size() != 3 || detail::trim(header[0]) != "area_id" || detail::trim(header[1]) != "x" ||
      detail::trim(header[2]) != "y") {
    throw FormatError(source + ": header must be 'area_id,x,y'");
  }
  std::map<std::string, std::pair<double, double>> by_id;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    auto f = detail::split_commas(line);
    const std::string where = source + " row " + std::to_string(row);
    if (f.size() != 3) throw FormatError(where + ": expected 3 fields");
    by_id[std::string(detail::trim(f[0]))] = {detail::parse_double(f[1], where), detail::parse_double(f[2], where)};
  }
  Coordinates c;
  for (const auto& id : area_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw FormatError(source + ": no coordinates for area '" + id + "'");
    c.x.push_back(it->second.first);
    c.y.push_back(it->second.second);
  }
  return c;
}

using GridData = std::variant<ObservationSet, GroundTruth>;

// A fully dense file yields GroundTruth; a file with gaps yields an
// ObservationSet whose mask marks the non-empty cells.
inline GridData load_grid_csv(const std::filesystem::path& path,
                              const std::optional<std::filesystem::path>& coords_path = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  GridCsv g = parse_grid_csv(in, path.string());
  std::optional<Coordinates> coords;
  if (coords_path) {
    std::ifstream cin(*coords_path);
    if (!cin) throw IoError("cannot open '" + coords_path->string() + "'");
    coords = parse_coords_csv(cin, g.area_ids, coords_path->string());
  }
  const std::string name = path.stem().string();
  if (g.dense) {
    GroundTruth gt;
    gt.values = std::move(g.values);
    gt.times = std::move(g.times);
    gt.area_ids = std::move(g.area_ids);
    gt.coords = std::move(coords);
    gt.name = name;
    return gt;
  }
  ObservationSet obs;
  obs.values = std::move(g.values);
  obs.mask = std::move(g.mask);
  obs.times = std::move(g.times);
  obs.area_ids = std::move(g.area_ids);
  obs.coords = std::move(coords);
  obs.name = name;
  return obs;
}

// Writes a grid; cells with mask 0 (when a mask is given) are left empty.
inline void write_grid_csv(std::ostream& out, const DenseMatrix& values, const std::vector<double>& times,
                           const std::vector<std::string>& area_ids, const DenseMatrix* mask = nullptr) {
  out << "time";
  for (const auto& id : area_ids) out << ',' << id;
  out << '\n';
  for (std::size_t j = 0; j < values.cols(); ++j) {
    out << detail::format_double(times[j]);
    for (std::size_t i = 0; i < values.rows(); ++i) {
      out << ',';
      if (mask == nullptr || (*mask)(i, j) == 1.0) out << detail::format_double(values(i, j));
    }
    out << '\n';
  }
}

inline void save_grid_csv(const std::filesystem::path& path, const GroundTruth& gt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_grid_csv(out, gt.values, gt.times, gt.area_ids.empty() ? default_area_ids(gt.n_subareas()) : gt.area_ids);
}

inline void save_grid_csv(const std::filesystem::path& path, const ObservationSet& obs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  write_grid_csv(out, obs.values, obs.times, obs.area_ids.empty() ? default_area_ids(obs.n_subareas()) : obs.area_ids,
                 &obs.mask);
}

inline void save_coords_csv(const std::filesystem::path& path, const Coordinates& c,
                            const std::vector<std::string>& area_ids) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "area_id,x,y\n";
  for (std::size_t i = 0; i < c.size(); ++i)
    out << area_ids[i] << ',' << detail::format_double(c.x[i]) << ',' << detail::format_double(c.y[i]) << '\n';
}

}  // namespace continsense::dataio
