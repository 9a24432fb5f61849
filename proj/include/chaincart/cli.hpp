#ifndef CHAINCART_CLI_HPP
#define CHAINCART_CLI_HPP

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "chaincart/ddp.hpp"
#include "chaincart/io.hpp"
#include "chaincart/model.hpp"
#include "chaincart/sim.hpp"

namespace chaincart::cli {

namespace fs = std::filesystem;

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kError = 1, kNotDecouplable = 2 };

enum class Feedback { friend_gain, none, both };

inline Feedback parse_feedback(const std::string& s) {
  if (s == "friend") return Feedback::friend_gain;
  if (s == "none") return Feedback::none;
  if (s == "both") return Feedback::both;
  throw ConfigError("--feedback: expected friend, none or both");
}

namespace detail {

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

inline std::vector<std::string> input_names(const char* prefix) {
  return {std::string(prefix) + "_x", std::string(prefix) + "_y"};
}

}  // namespace detail

/// Writes A.csv, B.csv, E.csv, H.csv and layout.csv into out_dir.
inline int cmd_linearize(const RunConfig& cfg, const fs::path& out_dir, std::ostream& err) {
  try {
    const LinearModel lm = linearize(cfg.params, cfg.equilibrium);
    detail::ensure_dir(out_dir);
    const auto states = state_coordinate_names(lm.layout);
    {
      auto os = detail::open_output(out_dir / "A.csv");
      write_matrix_csv(os, lm.A, states);
    }
    {
      auto os = detail::open_output(out_dir / "B.csv");
      write_matrix_csv(os, lm.B, detail::input_names("u"));
    }
    {
      auto os = detail::open_output(out_dir / "E.csv");
      write_matrix_csv(os, lm.E, detail::input_names("w"));
    }
    {
      auto os = detail::open_output(out_dir / "H.csv");
      write_matrix_csv(os, lm.H, states);
    }
    auto os = detail::open_output(out_dir / "layout.csv");
    write_csv_row(os, {"index", "block", "component", "name"});
    const auto blocks = lm.layout.block_names();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      for (int c = 0; c < 2; ++c) {
        const std::size_t idx = 2 * b + static_cast<std::size_t>(c) + 1;
        write_csv_row(os, {std::to_string(idx), blocks[b], c == 0 ? "x" : "y", states[idx - 1]});
      }
    }
    if (!os) throw std::runtime_error("write failed in " + out_dir.string());
  } catch (const std::exception& e) {
    err << "linearize: " << e.what() << '\n';
    return kError;
  }
  return kOk;
}

/// Runs the decoupling solver; prints the report and optionally writes report.json.
inline int cmd_solve(const RunConfig& cfg, const std::optional<fs::path>& out_dir, bool timing,
                     std::ostream& out, std::ostream& err) {
  try {
    const auto start = std::chrono::steady_clock::now();
    const LinearModel lm = linearize(cfg.params, cfg.equilibrium);
    const DecouplingSolution sol = solve_ddp(lm, cfg.ddp_options());
    Report report = Report::from_solution(lm, cfg.equilibrium, sol);
    if (timing) {
      report.wall_time_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    const std::string text = report.serialize();
    out << text;
    if (out_dir) {
      detail::ensure_dir(*out_dir);
      auto os = detail::open_output(*out_dir / "report.json");
      os << text;
      if (!os) throw std::runtime_error("write failed in " + out_dir->string());
    }
    return report.decouplable ? kOk : kNotDecouplable;
  } catch (const std::exception& e) {
    err << "solve: " << e.what() << '\n';
    return kError;
  }
}

/**
 * @brief Linear closed-loop simulation from the zero state under the configured
 * disturbance.
 *
 * trajectory.csv: t, every state coordinate, y_x, y_y (friend gain unless
 * feedback is none). difference.csv (feedback both only): t, with_feedback_x,
 * with_feedback_y, without_feedback_x, without_feedback_y.
 */
inline int cmd_simulate(const RunConfig& cfg, Feedback feedback, const fs::path& out_dir,
                        std::ostream& err) {
  try {
    const LinearModel lm = linearize(cfg.params, cfg.equilibrium);
    const Index dim = lm.layout.dim();
    MatrixXd gain = MatrixXd::Zero(lm.B.cols(), dim);
    bool decouplable = true;
    if (feedback != Feedback::none) {
      const DecouplingSolution sol = solve_ddp(lm, cfg.ddp_options());
      decouplable = sol.decouplable;
      gain = sol.friend_matrix;
      if (!decouplable) err << "simulate: model is not decouplable, using zero feedback\n";
    }
    detail::ensure_dir(out_dir);

    const Trajectory traj =
        simulate_linear(lm, gain, cfg.signal, VectorXd::Zero(dim), cfg.t_end, cfg.dt);
    {
      auto os = detail::open_output(out_dir / "trajectory.csv");
      std::vector<std::string> header{"t"};
      for (const auto& s : state_coordinate_names(lm.layout)) header.push_back(s);
      header.push_back("y_x");
      header.push_back("y_y");
      write_csv_row(os, header);
      std::vector<std::string> cells(header.size());
      for (std::size_t k = 0; k < traj.size(); ++k) {
        cells[0] = format_double(traj.times[k]);
        for (Index i = 0; i < dim; ++i) cells[static_cast<std::size_t>(i) + 1] = format_double(traj.states[k](i));
        cells[cells.size() - 2] = format_double(traj.outputs[k](0));
        cells[cells.size() - 1] = format_double(traj.outputs[k](1));
        write_csv_row(os, cells);
      }
      if (!os) throw std::runtime_error("write failed in " + out_dir.string());
    }

    if (feedback == Feedback::both) {
      const DifferenceSeries diff = difference_experiment(lm, gain, cfg.signal, cfg.t_end, cfg.dt);
      auto os = detail::open_output(out_dir / "difference.csv");
      write_csv_row(os, {"t", "with_feedback_x", "with_feedback_y", "without_feedback_x",
                         "without_feedback_y"});
      for (std::size_t k = 0; k < diff.times.size(); ++k) {
        write_csv_row(os, {format_double(diff.times[k]), format_double(diff.with_feedback[k](0)),
                           format_double(diff.with_feedback[k](1)),
                           format_double(diff.without_feedback[k](0)),
                           format_double(diff.without_feedback[k](1))});
      }
      if (!os) throw std::runtime_error("write failed in " + out_dir.string());
    }
    return decouplable ? kOk : kNotDecouplable;
  } catch (const std::exception& e) {
    err << "simulate: " << e.what() << '\n';
    return kError;
  }
}

struct SweepOptions {
  Index n_min = 2;
  Index n_max = 8;
  std::vector<std::string> equilibria{"hanging", "inverted", "alternating"};
  /// Source of masses and lengths; unit values when absent.
  std::optional<ChainCartParams> params;
  DdpOptions ddp;
  bool timing = false;
};

struct SweepRow {
  Index n = 0;
  std::string equilibrium;
  std::string tuple;
  bool decouplable = false;
  Index dim_v_star = 0;
  int iterations = 0;
  double containment_residual = 0.0;
  double invariance_residual = 0.0;
  double chain_residual = 0.0;
  double time_s = 0.0;
  std::string error;
};

inline std::vector<std::string> parse_equilibria(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item != "hanging" && item != "inverted" && item != "alternating") {
      throw ConfigError("--equilibria: unknown equilibrium \"" + item + "\"");
    }
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("--equilibria: empty list");
  return out;
}

inline EquilibriumConfig named_equilibrium(const std::string& name, Index n) {
  if (name == "hanging") return EquilibriumConfig::hanging(n);
  if (name == "inverted") return EquilibriumConfig::inverted(n);
  return EquilibriumConfig::alternating(n);
}

inline ChainCartParams sweep_params(const SweepOptions& opts, Index n) {
  if (!opts.params) return ChainCartParams::uniform(n);
  ChainCartParams p = *opts.params;
  if (p.links() < n) {
    throw ConfigError("sweep: params supply " + std::to_string(p.links()) + " links but n=" +
                      std::to_string(n) + " was requested");
  }
  p.masses.resize(static_cast<std::size_t>(n));
  p.lengths.resize(static_cast<std::size_t>(n));
  return p;
}

inline SweepRow sweep_row(const SweepOptions& opts, Index n, const std::string& name) {
  SweepRow row;
  row.n = n;
  row.equilibrium = name;
  const auto start = std::chrono::steady_clock::now();
  try {
    const EquilibriumConfig eq = named_equilibrium(name, n);
    row.tuple = eq.tuple_string();
    const LinearModel lm = linearize(sweep_params(opts, n), eq);
    const DecouplingSolution sol = solve_ddp(lm, opts.ddp);
    row.decouplable = sol.decouplable;
    row.dim_v_star = sol.v_star.dim();
    row.iterations = sol.iterations;
    row.containment_residual = sol.containment_residual;
    row.invariance_residual = sol.invariance_residual;
    row.chain_residual = sol.chain_residual;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  row.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

/// Rows ordered by n ascending, then sign tuple lexicographically.
inline std::vector<SweepRow> run_sweep(const SweepOptions& opts) {
  if (opts.n_min < 1 || opts.n_min > opts.n_max || opts.n_max > 12) {
    throw ConfigError("sweep: require 1 <= n_min <= n_max <= 12");
  }
  std::vector<std::future<SweepRow>> pending;
  for (Index n = opts.n_min; n <= opts.n_max; ++n) {
    for (const auto& name : opts.equilibria) {
      pending.push_back(std::async(std::launch::async, sweep_row, std::cref(opts), n, name));
    }
  }
  std::vector<SweepRow> rows;
  for (auto& f : pending) rows.push_back(f.get());
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.n != b.n) return a.n < b.n;
    return a.tuple < b.tuple;
  });
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, bool timing) {
  std::vector<std::string> header{"n", "equilibrium", "tuple", "decouplable", "dim_v_star",
                                  "iterations", "containment_residual", "invariance_residual",
                                  "chain_residual", "error"};
  if (timing) header.push_back("time_s");
  write_csv_row(os, header);
  for (const auto& r : rows) {
    std::vector<std::string> cells{std::to_string(r.n),
                                   r.equilibrium,
                                   r.tuple,
                                   r.decouplable ? "true" : "false",
                                   std::to_string(r.dim_v_star),
                                   std::to_string(r.iterations),
                                   format_double(r.containment_residual),
                                   format_double(r.invariance_residual),
                                   format_double(r.chain_residual),
                                   r.error};
    if (timing) cells.push_back(format_double(r.time_s));
    write_csv_row(os, cells);
  }
}

/// Prints the sweep table and optionally writes sweep.csv. Exit code is 1 if
/// any row failed, else 2 if any row is not decouplable, else 0.
inline int cmd_sweep(const SweepOptions& opts, const std::optional<fs::path>& out_dir,
                     std::ostream& out, std::ostream& err) {
  try {
    const auto rows = run_sweep(opts);
    std::ostringstream table;
    write_sweep_csv(table, rows, opts.timing);
    out << table.str();
    if (out_dir) {
      detail::ensure_dir(*out_dir);
      auto os = detail::open_output(*out_dir / "sweep.csv");
      os << table.str();
      if (!os) throw std::runtime_error("write failed in " + out_dir->string());
    }
    const bool any_error = std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.error.empty(); });
    const bool all_ok = std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.decouplable; });
    for (const auto& r : rows) {
      if (!r.error.empty()) err << "sweep: n=" << r.n << ' ' << r.equilibrium << ": " << r.error << '\n';
    }
    if (any_error) return kError;
    return all_ok ? kOk : kNotDecouplable;
  } catch (const std::exception& e) {
    err << "sweep: " << e.what() << '\n';
    return kError;
  }
}

}  // namespace chaincart::cli

#endif  // CHAINCART_CLI_HPP
