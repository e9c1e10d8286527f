#include "kd/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace kd {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& tok, long line) {
  std::string t = trim(tok);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw error(errc::parse_error, "invalid number '" + t + "'", line);
  return v;
}

struct Layout {
  int dim = 0;
  bool has_w = false;
  bool has_u = false;
  std::size_t columns() const {
    return static_cast<std::size_t>(dim) + (has_w ? 1 : 0) + (has_u ? dim : 0);
  }
};

Layout parse_header(const std::vector<std::string>& cols, long line) {
  Layout lay;
  std::size_t i = 0;
  while (i < cols.size()) {
    std::string c = trim(cols[i]);
    std::string expect = "x" + std::to_string(lay.dim + 1);
    if (c == expect) {
      ++lay.dim;
      ++i;
      continue;
    }
    break;
  }
  if (lay.dim == 0) throw error(errc::parse_error, "header must start with x1,x2,...", line);
  if (i < cols.size() && trim(cols[i]) == "w") {
    lay.has_w = true;
    ++i;
  }
  int u_seen = 0;
  while (i < cols.size()) {
    std::string c = trim(cols[i]);
    std::string expect = "u" + std::to_string(u_seen + 1);
    if (c != expect)
      throw error(errc::parse_error, "unexpected column '" + c + "'", line);
    ++u_seen;
    ++i;
  }
  if (u_seen != 0 && u_seen != lay.dim)
    throw error(errc::parse_error, "orientation columns must be u1..ud", line);
  lay.has_u = u_seen == lay.dim && u_seen > 0;
  return lay;
}

void add_row(LoadedPointSet& out, const Layout& lay, const std::vector<double>& vals, long line) {
  std::span<const double> coords(vals.data(), lay.dim);
  double w = lay.has_w ? vals[lay.dim] : 1.0;
  if (!(w > 0.0))
    throw error(errc::parse_error, "weight must be positive", line);
  if (lay.has_u) {
    const double* u = vals.data() + lay.dim + (lay.has_w ? 1 : 0);
    double n2 = 0.0;
    for (int t = 0; t < lay.dim; ++t) n2 += u[t] * u[t];
    double n = std::sqrt(n2);
    if (!(std::abs(n - 1.0) <= 1e-6))
      throw error(errc::parse_error, "orientation row is not unit length (tolerance 1e-6)", line);
    std::vector<double> un(lay.dim);
    for (int t = 0; t < lay.dim; ++t) un[t] = u[t] / n;
    out.oriented->add(coords, w, un);
  }
  out.points.add(coords, w);
}

LoadedPointSet load_csv(const std::string& path) {
  std::ifstream is(path);
  require(bool(is), errc::io_error, "cannot open " + path);
  std::string line;
  long lineno = 0;
  require(bool(std::getline(is, line)), errc::parse_error, "empty file: " + path);
  ++lineno;
  Layout lay = parse_header(split_csv_line(line), lineno);

  LoadedPointSet out;
  out.points = WeightedPointSet(lay.dim);
  if (lay.has_u) out.oriented.emplace(lay.dim);

  std::vector<double> vals(lay.columns());
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto toks = split_csv_line(line);
    if (toks.size() != lay.columns())
      throw error(errc::parse_error,
                  "expected " + std::to_string(lay.columns()) + " columns, got " +
                      std::to_string(toks.size()),
                  lineno);
    for (std::size_t c = 0; c < toks.size(); ++c) vals[c] = parse_number(toks[c], lineno);
    try {
      add_row(out, lay, vals, lineno);
    } catch (const error& e) {
      if (e.kind() == errc::parse_error) throw;
      throw error(errc::parse_error, e.what(), lineno);
    }
  }
  require(!out.points.empty(), errc::parse_error, "file holds no points: " + path);
  return out;
}

LoadedPointSet load_json(const std::string& path) {
  std::ifstream is(path);
  require(bool(is), errc::io_error, "cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::parse_error, std::string("invalid JSON: ") + e.what());
  }
  require(j.contains("columns") && j.contains("rows"), errc::parse_error,
          "JSON point set needs 'columns' and 'rows'");
  std::vector<std::string> cols = j["columns"].get<std::vector<std::string>>();
  Layout lay = parse_header(cols, 1);

  LoadedPointSet out;
  out.points = WeightedPointSet(lay.dim);
  if (lay.has_u) out.oriented.emplace(lay.dim);
  std::vector<double> vals(lay.columns());
  long rowno = 0;
  for (const auto& row : j["rows"]) {
    ++rowno;
    require(row.is_array() && row.size() == lay.columns(), errc::parse_error,
            "JSON row " + std::to_string(rowno) + " has wrong arity");
    for (std::size_t c = 0; c < vals.size(); ++c) vals[c] = row[c].get<double>();
    add_row(out, lay, vals, rowno);
  }
  require(!out.points.empty(), errc::parse_error, "file holds no points: " + path);
  return out;
}

}  // namespace

LoadedPointSet load_point_set(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") return load_json(path);
  return load_csv(path);
}

void save_point_set_csv(const std::string& path, const WeightedPointSet& P) {
  std::ofstream os(path);
  require(bool(os), errc::io_error, "cannot open " + path + " for writing");
  for (int t = 0; t < P.dim(); ++t) os << (t ? "," : "") << "x" << (t + 1);
  os << ",w\n";
  char buf[32];
  for (std::size_t i = 0; i < P.size(); ++i) {
    auto p = P.point(i);
    for (int t = 0; t < P.dim(); ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", p[t]);
      os << (t ? "," : "") << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", P.mass(i));
    os << "," << buf << "\n";
  }
  require(bool(os), errc::io_error, "write failed: " + path);
}

}  // namespace kd
