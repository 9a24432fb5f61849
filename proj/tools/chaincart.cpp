// Command-line front end: linearize, solve, simulate and sweep.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "chaincart/cli.hpp"

namespace cc = chaincart;
namespace cli = chaincart::cli;

int main(int argc, char** argv) {
  CLI::App app{"Disturbance decoupling workbench for the n-link chain pendulum on a cart"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<double> tol;
  std::string feedback = "both";
  long n_min = 2;
  long n_max = 8;
  std::string equilibria = "hanging,inverted,alternating";
  bool timing = false;

  auto* linearize = app.add_subcommand("linearize", "Write A, B, E, H and the state layout as CSV");
  linearize->add_option("--config", config_path, "Run configuration (JSON)")->required();
  linearize->add_option("--out", out_dir, "Output directory")->required();

  auto* solve = app.add_subcommand("solve", "Decide decouplability and compute a friend");
  solve->add_option("--config", config_path, "Run configuration (JSON)")->required();
  solve->add_option("--out", out_dir, "Directory for report.json");
  solve->add_option("--tol", tol, "Verification tolerance");
  solve->add_flag("--timing", timing, "Include wall time in the report");

  auto* simulate = app.add_subcommand("simulate", "Linear closed-loop runs and the difference experiment");
  simulate->add_option("--config", config_path, "Run configuration (JSON)")->required();
  simulate->add_option("--out", out_dir, "Output directory")->required();
  simulate->add_option("--tol", tol, "Verification tolerance");
  simulate->add_option("--feedback", feedback, "friend, none or both")
      ->check(CLI::IsMember({"friend", "none", "both"}));

  auto* sweep = app.add_subcommand("sweep", "Solve across link counts and equilibria");
  sweep->add_option("--config", config_path, "Optional configuration supplying masses and lengths");
  sweep->add_option("--out", out_dir, "Directory for sweep.csv");
  sweep->add_option("--tol", tol, "Verification tolerance");
  sweep->add_option("--n-min", n_min, "Smallest link count");
  sweep->add_option("--n-max", n_max, "Largest link count (at most 12)");
  sweep->add_option("--equilibria", equilibria, "Comma list of hanging, inverted, alternating");
  sweep->add_flag("--timing", timing, "Add a wall-time column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kError;
  }

  try {
    if (*sweep) {
      cli::SweepOptions opts;
      opts.n_min = n_min;
      opts.n_max = n_max;
      opts.equilibria = cli::parse_equilibria(equilibria);
      opts.timing = timing;
      if (!config_path.empty()) {
        const cc::RunConfig cfg = cc::load_config(config_path);
        opts.params = cfg.params;
        opts.ddp = cfg.ddp_options();
      }
      if (tol) opts.ddp.verify_tol = *tol;
      std::optional<cli::fs::path> out;
      if (!out_dir.empty()) out = out_dir;
      return cli::cmd_sweep(opts, out, std::cout, std::cerr);
    }

    cc::RunConfig cfg = cc::load_config(config_path);
    if (tol) {
      if (!(*tol > 0.0)) throw cc::ConfigError("--tol: must be positive");
      cfg.tol = *tol;
    }
    if (*linearize) return cli::cmd_linearize(cfg, out_dir, std::cerr);
    if (*solve) {
      std::optional<cli::fs::path> out;
      if (!out_dir.empty()) out = out_dir;
      return cli::cmd_solve(cfg, out, timing, std::cout, std::cerr);
    }
    return cli::cmd_simulate(cfg, cli::parse_feedback(feedback), out_dir, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kError;
  }
}
