#include "proxbridge/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "proxbridge/errors.hpp"
#include "proxbridge/hash.hpp"

namespace proxbridge::io {

nlohmann::json support_to_json(const ActionSupport& s) {
  if (s.is_discrete()) return {{"kind", "discrete"}, {"levels", s.levels}};
  return {{"kind", "continuous"}, {"lo", s.lo}, {"hi", s.hi}};
}

ActionSupport support_from_json(const nlohmann::json& j) {
  const std::string kind = require(j, "kind", "support").get<std::string>();
  if (kind == "discrete") {
    check_keys(j, {"kind", "levels"}, "support");
    return ActionSupport::discrete(require(j, "levels", "support").get<std::vector<double>>());
  }
  if (kind == "continuous") {
    check_keys(j, {"kind", "lo", "hi"}, "support");
    return ActionSupport::continuous(require(j, "lo", "support").get<double>(), require(j, "hi", "support").get<double>());
  }
  throw ConfigError("support.kind must be 'discrete' or 'continuous', got '" + kind + "'");
}

std::vector<std::string> csv_columns(Eigen::Index p_w, Eigen::Index p_z, Eigen::Index d_x) {
  std::vector<std::string> c{"y"};
  for (Eigen::Index i = 1; i <= p_w; ++i) c.push_back("w_" + std::to_string(i));
  for (Eigen::Index i = 1; i <= p_z; ++i) c.push_back("z_" + std::to_string(i));
  c.push_back("a");
  for (Eigen::Index i = 1; i <= d_x; ++i) c.push_back("x_" + std::to_string(i));
  return c;
}

std::filesystem::path default_sidecar(const std::filesystem::path& csv) {
  auto p = csv;
  p += ".json";
  return p;
}

namespace {

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void fmt_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_table(const ObservationTable& t, const std::filesystem::path& csv, const std::filesystem::path& sidecar) {
  const auto cols = csv_columns(t.p_w(), t.p_z(), t.d_x());
  std::string text;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) text += ',';
    text += cols[c];
  }
  text += '\n';
  for (Eigen::Index i = 0; i < t.n(); ++i) {
    fmt_double(text, t.y()(i));
    for (Eigen::Index c = 0; c < t.p_w(); ++c) text += ',', fmt_double(text, t.w()(i, c));
    for (Eigen::Index c = 0; c < t.p_z(); ++c) text += ',', fmt_double(text, t.z()(i, c));
    text += ',';
    fmt_double(text, t.a()(i));
    for (Eigen::Index c = 0; c < t.d_x(); ++c) text += ',', fmt_double(text, t.x()(i, c));
    text += '\n';
  }
  write_text(csv, text);
  write_json(sidecar, {{"n", t.n()},
                       {"p_w", t.p_w()},
                       {"p_z", t.p_z()},
                       {"d_x", t.d_x()},
                       {"support", support_to_json(t.support())},
                       {"hash", hex64(t.hash())}});
}

ObservationTable read_table(const std::filesystem::path& csv, const std::filesystem::path& sidecar) {
  const nlohmann::json meta = read_json(sidecar);
  check_keys(meta, {"n", "p_w", "p_z", "d_x", "support", "hash"}, "sidecar");
  const auto p_w = require(meta, "p_w", "sidecar").get<Eigen::Index>();
  const auto p_z = require(meta, "p_z", "sidecar").get<Eigen::Index>();
  const auto d_x = require(meta, "d_x", "sidecar").get<Eigen::Index>();
  if (p_w < 1 || p_z < 1 || d_x < 0) throw ValidationError("sidecar dims need p_w >= 1, p_z >= 1, d_x >= 0");
  const ActionSupport support = support_from_json(require(meta, "support", "sidecar"));

  std::ifstream in(csv);
  if (!in) throw IoError("cannot open data file " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("data file " + csv.string() + " has no header row");
  const auto header = split(line);
  const auto want = csv_columns(p_w, p_z, d_x);
  std::vector<std::size_t> pos(want.size());
  for (std::size_t c = 0; c < want.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), want[c]);
    if (it == header.end()) {
      throw ValidationError("data file " + csv.string() + " is missing column '" + want[c] +
                            "' (expected header y,w_1..w_" + std::to_string(p_w) + ",z_1..z_" + std::to_string(p_z) +
                            ",a" + (d_x > 0 ? ",x_1..x_" + std::to_string(d_x) : std::string()) + ")");
    }
    pos[c] = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ValidationError("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " fields, header has " + std::to_string(header.size()));
    }
    std::vector<double> r(want.size());
    for (std::size_t c = 0; c < want.size(); ++c) {
      const std::string& s = cells[pos[c]];
      char* end = nullptr;
      errno = 0;
      r[c] = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
        throw ValidationError("line " + std::to_string(line_no) + ", column '" + want[c] + "': cannot parse '" + s + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (meta.contains("n") && meta.at("n").get<Eigen::Index>() != n) {
    throw ValidationError("sidecar declares " + std::to_string(meta.at("n").get<Eigen::Index>()) + " rows, data file has " +
                          std::to_string(n));
  }
  VectorXd y(n), a(n);
  RowMatrix w(n, p_w), z(n, p_z), x(n, d_x);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    std::size_t k = 0;
    y(i) = r[k++];
    for (Eigen::Index c = 0; c < p_w; ++c) w(i, c) = r[k++];
    for (Eigen::Index c = 0; c < p_z; ++c) z(i, c) = r[k++];
    a(i) = r[k++];
    for (Eigen::Index c = 0; c < d_x; ++c) x(i, c) = r[k++];
  }
  return ObservationTable(std::move(y), std::move(w), std::move(z), std::move(a), std::move(x), support);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) {
      std::string list;
      for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
      throw ConfigError(where + ": unknown key '" + k + "' (allowed: " + list + ")");
    }
  }
}

const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  return j.at(key);
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const nlohmann::json& j) {
  Fnv1a h;
  h.str(j.dump());
  return hex64(h.digest());
}

}  // namespace proxbridge::io
