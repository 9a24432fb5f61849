#ifndef CHAINCART_IO_HPP
#define CHAINCART_IO_HPP

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "chaincart/ddp.hpp"
#include "chaincart/model.hpp"
#include "chaincart/sim.hpp"

namespace chaincart {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal that round-trips, "." separator, independent of locale.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

struct RunConfig {
  ChainCartParams params;
  EquilibriumConfig equilibrium;
  DisturbanceSignal signal = DisturbanceSignal::step(Vector2d(1.0, 0.0));
  double t_end = 20.0;
  double dt = 1e-3;
  double tol = 1e-8;
  std::optional<double> rank_tol;
  std::uint64_t seed = 0;

  DdpOptions ddp_options() const {
    DdpOptions o;
    o.verify_tol = tol;
    if (rank_tol) o.rank_rtol = rank_tol;
    return o;
  }
};

namespace detail {

inline double number_at(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key \"" + key + "\"");
  if (!j.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return j.at(key).get<double>();
}

inline std::vector<double> numbers_at(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key \"" + key + "\"");
  const json& arr = j.at(key);
  if (!arr.is_array()) throw ConfigError(where + "." + key + ": expected a list of numbers");
  std::vector<double> out;
  for (const auto& v : arr) {
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a list of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline Vector2d pair_at(const json& j, const char* key, const std::string& where) {
  const auto v = numbers_at(j, key, where);
  if (v.size() != 2) throw ConfigError(where + "." + key + ": expected two entries");
  return {v[0], v[1]};
}

inline EquilibriumConfig parse_equilibrium(const json& j, Index n) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "hanging") return EquilibriumConfig::hanging(n);
    if (name == "inverted") return EquilibriumConfig::inverted(n);
    if (name == "alternating" || name == "folded") return EquilibriumConfig::alternating(n);
    throw ConfigError("equilibrium: unknown name \"" + name + "\"");
  }
  if (!j.is_array()) throw ConfigError("equilibrium: expected a name or a list of signs");
  EquilibriumConfig eq;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& v = j[i];
    if (!v.is_number_integer() || (v.get<int>() != 1 && v.get<int>() != -1)) {
      throw ConfigError("equilibrium: entry " + std::to_string(i + 1) + " must be +1 or -1");
    }
    eq.s.push_back(v.get<int>());
  }
  if (eq.links() != n) {
    throw ConfigError("equilibrium: " + std::to_string(eq.s.size()) + " signs for " +
                      std::to_string(n) + " links");
  }
  return eq;
}

inline DisturbanceSignal parse_signal(const json& j) {
  if (!j.is_object()) throw ConfigError("signal: expected an object");
  const std::string kind = j.value("kind", std::string("step"));
  if (kind == "zero") return DisturbanceSignal::none();
  if (kind == "step") {
    return DisturbanceSignal::step(pair_at(j, "amplitude", "signal"), j.value("t0", 0.0));
  }
  if (kind == "sine") {
    const double hz = number_at(j, "frequency_hz", "signal");
    if (!(hz > 0.0)) throw ConfigError("signal.frequency_hz: must be positive");
    return DisturbanceSignal::sine(pair_at(j, "amplitude", "signal"), hz, j.value("phase", 0.0));
  }
  throw ConfigError("signal.kind: expected zero, step or sine");
}

inline json signal_to_json(const DisturbanceSignal& w) {
  switch (w.kind) {
    case DisturbanceSignal::Kind::zero:
      return {{"kind", "zero"}};
    case DisturbanceSignal::Kind::step:
      return {{"kind", "step"}, {"amplitude", {w.amplitude(0), w.amplitude(1)}}, {"t0", w.t0}};
    case DisturbanceSignal::Kind::sine:
      return {{"kind", "sine"},
              {"amplitude", {w.amplitude(0), w.amplitude(1)}},
              {"frequency_hz", w.frequency_hz},
              {"phase", w.phase}};
  }
  return {};
}

}  // namespace detail

/**
 * @brief Parses a run configuration document.
 *
 * Schema (JSON):
 *   params.m_cart, params.masses[], params.lengths[], params.g (default 9.81);
 *   equilibrium: "hanging" | "inverted" | "alternating" | [+1/-1, ...] (default hanging);
 *   signal: {kind: zero|step|sine, amplitude: [ax, ay], t0, frequency_hz, phase};
 *   t_end, dt, tol, rank_tol, seed.
 */
inline RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object at top level");
  if (!doc.contains("params")) throw ConfigError("config: missing key \"params\"");
  const json& pj = doc.at("params");
  if (!pj.is_object()) throw ConfigError("params: expected an object");

  RunConfig cfg;
  auto& p = cfg.params;
  p.m_cart = detail::number_at(pj, "m_cart", "params");
  p.masses = detail::numbers_at(pj, "masses", "params");
  p.lengths = detail::numbers_at(pj, "lengths", "params");
  if (pj.contains("g")) p.g = detail::number_at(pj, "g", "params");

  if (p.masses.empty()) throw ConfigError("params.masses: at least one link is required");
  if (p.masses.size() != p.lengths.size()) {
    throw ConfigError("params: masses has " + std::to_string(p.masses.size()) +
                      " entries but lengths has " + std::to_string(p.lengths.size()));
  }
  if (!(p.m_cart > 0.0)) throw ConfigError("params.m_cart: must be positive");
  for (std::size_t i = 0; i < p.masses.size(); ++i) {
    if (!(p.masses[i] > 0.0)) {
      throw ConfigError("params.masses: entry " + std::to_string(i + 1) + " must be positive");
    }
    if (!(p.lengths[i] > 0.0)) {
      throw ConfigError("params.lengths: entry " + std::to_string(i + 1) + " must be positive");
    }
  }
  if (!(p.g > 0.0)) throw ConfigError("params.g: must be positive");

  const Index n = p.links();
  cfg.equilibrium = doc.contains("equilibrium") ? detail::parse_equilibrium(doc.at("equilibrium"), n)
                                                : EquilibriumConfig::hanging(n);
  if (doc.contains("signal")) cfg.signal = detail::parse_signal(doc.at("signal"));
  if (doc.contains("t_end")) cfg.t_end = detail::number_at(doc, "t_end", "config");
  if (doc.contains("dt")) cfg.dt = detail::number_at(doc, "dt", "config");
  if (doc.contains("tol")) cfg.tol = detail::number_at(doc, "tol", "config");
  if (doc.contains("rank_tol")) cfg.rank_tol = detail::number_at(doc, "rank_tol", "config");
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) throw ConfigError("config.seed: expected a nonnegative integer");
    cfg.seed = doc.at("seed").get<std::uint64_t>();
  }
  if (!(cfg.dt > 0.0)) throw ConfigError("config.dt: must be positive");
  if (!(cfg.t_end >= cfg.dt)) throw ConfigError("config.t_end: must be at least dt");
  if (!(cfg.tol > 0.0)) throw ConfigError("config.tol: must be positive");
  if (cfg.rank_tol && !(*cfg.rank_tol > 0.0)) throw ConfigError("config.rank_tol: must be positive");
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return parse_config(doc);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

inline json config_to_json(const RunConfig& cfg) {
  json doc;
  doc["params"] = {{"m_cart", cfg.params.m_cart},
                   {"masses", cfg.params.masses},
                   {"lengths", cfg.params.lengths},
                   {"g", cfg.params.g}};
  doc["equilibrium"] = cfg.equilibrium.s;
  doc["signal"] = detail::signal_to_json(cfg.signal);
  doc["t_end"] = cfg.t_end;
  doc["dt"] = cfg.dt;
  doc["tol"] = cfg.tol;
  if (cfg.rank_tol) doc["rank_tol"] = *cfg.rank_tol;
  doc["seed"] = cfg.seed;
  return doc;
}

/// Outcome of a solve run.
struct Report {
  Index n = 0;
  std::string equilibrium;
  bool decouplable = false;
  Index dim_v_star = 0;
  int iterations = 0;
  double containment_residual = 0.0;
  double invariance_residual = 0.0;
  double chain_residual = 0.0;
  MatrixXd friend_matrix;
  std::optional<double> wall_time_s;

  static Report from_solution(const LinearModel& lm, const EquilibriumConfig& eq,
                              const DecouplingSolution& sol) {
    Report r;
    r.n = lm.n;
    r.equilibrium = eq.tuple_string();
    r.decouplable = sol.decouplable;
    r.dim_v_star = sol.v_star.dim();
    r.iterations = sol.iterations;
    r.containment_residual = sol.containment_residual;
    r.invariance_residual = sol.invariance_residual;
    r.chain_residual = sol.chain_residual;
    r.friend_matrix = sol.friend_matrix;
    return r;
  }

  json to_json() const {
    json rows = json::array();
    for (Index i = 0; i < friend_matrix.rows(); ++i) {
      json row = json::array();
      for (Index j = 0; j < friend_matrix.cols(); ++j) row.push_back(friend_matrix(i, j));
      rows.push_back(row);
    }
    json doc = {{"n", n},
                {"equilibrium", equilibrium},
                {"decouplable", decouplable},
                {"dim_v_star", dim_v_star},
                {"iterations", iterations},
                {"containment_residual", containment_residual},
                {"invariance_residual", invariance_residual},
                {"chain_residual", chain_residual},
                {"friend", rows}};
    if (wall_time_s) doc["wall_time_s"] = *wall_time_s;
    return doc;
  }

  static Report from_json(const json& doc) {
    Report r;
    r.n = doc.at("n").get<Index>();
    r.equilibrium = doc.at("equilibrium").get<std::string>();
    r.decouplable = doc.at("decouplable").get<bool>();
    r.dim_v_star = doc.at("dim_v_star").get<Index>();
    r.iterations = doc.at("iterations").get<int>();
    r.containment_residual = doc.at("containment_residual").get<double>();
    r.invariance_residual = doc.at("invariance_residual").get<double>();
    r.chain_residual = doc.at("chain_residual").get<double>();
    const json& rows = doc.at("friend");
    const Index cols = rows.empty() ? 0 : static_cast<Index>(rows.at(0).size());
    r.friend_matrix.resize(static_cast<Index>(rows.size()), cols);
    for (Index i = 0; i < r.friend_matrix.rows(); ++i) {
      for (Index j = 0; j < cols; ++j) r.friend_matrix(i, j) = rows.at(i).at(j).get<double>();
    }
    if (doc.contains("wall_time_s")) r.wall_time_s = doc.at("wall_time_s").get<double>();
    return r;
  }

  std::string serialize() const { return to_json().dump(2) + "\n"; }
};

/// Names of each state coordinate, e.g. "CT_domega_2_x".
inline std::vector<std::string> state_coordinate_names(const StateLayout& layout) {
  std::vector<std::string> out;
  for (const auto& block : layout.block_names()) {
    out.push_back(block + "_x");
    out.push_back(block + "_y");
  }
  return out;
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) os << ',';
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\n") == std::string::npos) {
      os << c;
      continue;
    }
    os << '"';
    for (char ch : c) {
      if (ch == '"') os << '"';
      os << ch;
    }
    os << '"';
  }
  os << '\n';
}

/// Header row of column names followed by the matrix rows.
inline void write_matrix_csv(std::ostream& os, const MatrixXd& m,
                             const std::vector<std::string>& column_names) {
  if (static_cast<Index>(column_names.size()) != m.cols()) {
    throw std::invalid_argument("write_matrix_csv: column name count mismatch");
  }
  write_csv_row(os, column_names);
  std::vector<std::string> cells(static_cast<std::size_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) cells[static_cast<std::size_t>(j)] = format_double(m(i, j));
    write_csv_row(os, cells);
  }
}

/// Minimal reader for the numeric CSV files written here: returns the header
/// and the data rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cell);
      cell.clear();
    } else {
      cell += ch;
    }
  }
  out.push_back(cell);
  return out;
}

inline CsvTable read_numeric_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) return t;
  t.header = split_csv_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split_csv_line(line)) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc()) throw std::runtime_error("read_numeric_csv: bad number " + cell);
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace chaincart

#endif  // CHAINCART_IO_HPP
