#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "chaincart/io.hpp"
#include "test_util.hpp"

using namespace chaincart;
using namespace chaincart::testing;

namespace {

const char* kValid = R"({
  "params": {"m_cart": 4, "masses": [6, 4, 3, 2], "lengths": [5, 4, 2, 2]},
  "equilibrium": [1, 1, 1, 1],
  "signal": {"kind": "sine", "amplitude": [1, 0], "frequency_hz": 0.5},
  "t_end": 20, "dt": 0.001, "tol": 1e-8, "seed": 7
})";

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string with(const std::string& params, const std::string& rest = "") {
  return "{\"params\": " + params + rest + "}";
}

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  int checked = 0;
  while (checked < 2000) {
    std::uint64_t b = bits(rng);
    double v;
    std::memcpy(&v, &b, sizeof v);
    if (!std::isfinite(v)) continue;
    const std::string s = format_double(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
    ++checked;
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(735.75), "735.75");
  EXPECT_EQ(format_double(1e-300), "1e-300");
}

TEST(Config, ParsesFullDocument) {
  const RunConfig cfg = parse_config_text(kValid);
  EXPECT_EQ(cfg.params.links(), 4);
  EXPECT_EQ(cfg.params.m_cart, 4.0);
  EXPECT_EQ(cfg.params.g, 9.81);
  EXPECT_EQ(cfg.equilibrium.tuple_string(), "++++");
  EXPECT_EQ(cfg.signal.kind, DisturbanceSignal::Kind::sine);
  EXPECT_EQ(cfg.signal.frequency_hz, 0.5);
  EXPECT_EQ(cfg.dt, 0.001);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_FALSE(cfg.rank_tol.has_value());
}

TEST(Config, DefaultsAndNamedEquilibria) {
  const RunConfig cfg = parse_config_text(with(R"({"m_cart": 1, "masses": [1, 1, 1], "lengths": [1, 1, 1]})",
                                               R"(, "equilibrium": "folded")"));
  EXPECT_EQ(cfg.equilibrium.tuple_string(), "+-+");
  EXPECT_EQ(cfg.signal.kind, DisturbanceSignal::Kind::step);
  EXPECT_EQ(cfg.signal.amplitude, Vector2d(1, 0));
  EXPECT_EQ(cfg.t_end, 20.0);
  EXPECT_EQ(cfg.dt, 1e-3);
  EXPECT_EQ(parse_config_text(with(R"({"m_cart": 1, "masses": [1], "lengths": [1]})", R"(, "equilibrium": "inverted")"))
                .equilibrium.tuple_string(),
            "-");
}

TEST(Config, RoundTripsThroughJson) {
  RunConfig cfg = parse_config_text(kValid);
  cfg.rank_tol = 1e-11;
  const RunConfig back = parse_config(config_to_json(cfg));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(cfg).dump());
}

TEST(Config, DistinctDiagnostics) {
  const std::string p1 = R"({"m_cart": 1, "masses": [1, 1], "lengths": [1, 1]})";
  const std::vector<std::pair<std::string, std::string>> cases{
      {with(R"({"m_cart": 1, "masses": [1, 1], "lengths": [1]})"), "masses has 2 entries but lengths has 1"},
      {with(R"({"m_cart": 1, "masses": [1, 0], "lengths": [1, 1]})"), "params.masses: entry 2 must be positive"},
      {with(R"({"m_cart": 1, "masses": [1, 1], "lengths": [-1, 1]})"), "params.lengths: entry 1 must be positive"},
      {with(R"({"m_cart": 0, "masses": [1], "lengths": [1]})"), "params.m_cart: must be positive"},
      {with(p1, R"(, "dt": 0)"), "config.dt: must be positive"},
      {with(p1, R"(, "equilibrium": [1, 0])"), "equilibrium: entry 2 must be +1 or -1"},
      {with(p1, R"(, "equilibrium": [1, 1, 1])"), "equilibrium: 3 signs for 2 links"},
      {with(p1, R"(, "equilibrium": "sideways")"), "unknown name"},
      {with(p1, R"(, "signal": {"kind": "sine", "amplitude": [1, 0], "frequency_hz": 0})"),
       "signal.frequency_hz: must be positive"},
      {"{\"params\": ", "parse error"},
      {"[]", "expected a JSON object"},
      {with(R"({"masses": [1], "lengths": [1]})"), "missing key \"m_cart\""},
  };
  std::set<std::string> seen;
  for (const auto& [text, needle] : cases) {
    const std::string msg = error_of(text);
    EXPECT_NE(msg.find(needle), std::string::npos) << "got: " << msg;
    seen.insert(msg);
  }
  EXPECT_EQ(seen.size(), cases.size());
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Report, RoundTripsThroughSerialization) {
  Report r;
  r.n = 4;
  r.equilibrium = "++++";
  r.decouplable = true;
  r.dim_v_star = 10;
  r.iterations = 5;
  r.containment_residual = 3.6e-15;
  r.invariance_residual = 1.0 / 3.0;
  r.chain_residual = 4.6e-17;
  std::mt19937_64 rng(2);
  r.friend_matrix = random_matrix(rng, 2, 20);
  const Report back = Report::from_json(json::parse(r.serialize()));
  EXPECT_EQ(back.serialize(), r.serialize());
  EXPECT_EQ(back.friend_matrix, r.friend_matrix);
  EXPECT_EQ(back.invariance_residual, r.invariance_residual);
  EXPECT_FALSE(back.wall_time_s.has_value());
  r.wall_time_s = 0.25;
  EXPECT_EQ(Report::from_json(json::parse(r.serialize())).wall_time_s, 0.25);
}

TEST(Csv, QuotesOnlyWhenNeeded) {
  std::ostringstream os;
  write_csv_row(os, {"plain", "with,comma", "with \"quote\"", ""});
  EXPECT_EQ(os.str(), "plain,\"with,comma\",\"with \"\"quote\"\"\",\n");
  EXPECT_EQ(split_csv_line("plain,\"with,comma\",\"with \"\"quote\"\"\","),
            (std::vector<std::string>{"plain", "with,comma", "with \"quote\"", ""}));
}

TEST(Csv, MatrixRoundTrip) {
  std::mt19937_64 rng(3);
  const MatrixXd m = random_matrix(rng, 5, 3);
  std::ostringstream os;
  write_matrix_csv(os, m, {"a", "b", "c"});
  std::istringstream is(os.str());
  const CsvTable t = read_numeric_csv(is);
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(t.rows.size(), 5u);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 3; ++j) EXPECT_EQ(t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], m(i, j));
}

TEST(Csv, StateCoordinateNames) {
  const auto names = state_coordinate_names(StateLayout{2});
  ASSERT_EQ(names.size(), 12u);
  EXPECT_EQ(names[0], "dv_x");
  EXPECT_EQ(names[5], "CT_domega_2_y");
  EXPECT_EQ(names[6], "dx_x");
  EXPECT_EQ(names[11], "CT_xi_2_y");
}
