#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "generators.hpp"
#include "json.hpp"
#include "kdiag/scenario.hpp"
#include "kdiag/serialize.hpp"

using namespace kdiag;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// CSV with the wall_ms column blanked, for determinism comparisons.
std::string strip_wall(const std::string& csv) {
  std::string out;
  std::stringstream ss(csv);
  std::string line;
  while (std::getline(ss, line)) {
    auto pos = line.rfind(',');
    out += line.substr(0, pos) + "\n";
  }
  return out;
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("kdiag_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("config parsing and validation") {
  auto cfg = ScenarioConfig::from_json_text(R"json({
    "scenario": "mult1d", "d": 64, "mesh": "uniform",
    "spaces": ["cap_inf(ln1(2))"], "psis": ["pow(1/2)"],
    "m_min": 0, "m_max": 4, "seed": 7, "output_dir": "/tmp/x"
  })json");
  CHECK_NOTHROW(cfg.validate());

  CHECK_THROWS_AS(ScenarioConfig::from_json_text("{\"scenario\":\"mult1d\"}"),
                  ValidationError);  // missing seed / output_dir

  auto bad_psi = cfg;
  bad_psi.psis = {"pow(3)"};
  CHECK_THROWS_AS(bad_psi.validate(), ValidationError);

  auto bad_scenario = cfg;
  bad_scenario.scenario = "unknown";
  CHECK_THROWS_AS(bad_scenario.validate(), ValidationError);

  // run_scenario surfaces config errors as exit code 2
  auto outcome = run_scenario(bad_psi);
  CHECK(outcome.exit_code == 2);
  CHECK(outcome.error_kind == "config-error");
}

TEST_CASE("mult1d run: bounds recomputed, slack nonnegative, deterministic") {
  ScenarioConfig cfg;
  cfg.scenario = "mult1d";
  cfg.d = 64;
  cfg.mesh = "uniform";
  cfg.spaces = {"cap_inf(ln1(2))"};
  cfg.psis = {"pow(1/2)"};
  cfg.m_min = 0;
  cfg.m_max = 6;
  cfg.seed = 7;
  cfg.output_dir = temp_dir("mult1d_a").string();

  auto outcome = run_scenario(cfg);
  REQUIRE(outcome.exit_code == 0);
  // rows: per m, inf_comm + tau_pm + 1 psi row + 1 space row
  CHECK(outcome.rows.size() == 7 * 4);
  double tau_q = 1.0 / 64.0;
  for (const auto& r : outcome.rows) {
    CHECK(r.bound - r.measured >= -1e-9 * std::max(1.0, r.bound));
    if (r.metric == "inf_comm")
      CHECK(r.bound == doctest::Approx(std::ldexp(1.0, -int(r.index))));
    if (r.metric == "tau_pm")
      CHECK(r.bound ==
            doctest::Approx(std::ldexp(tau_q, int(r.index))));
    if (r.metric == "lorentz_comm_j0") {
      double m = r.index;
      double rhs = std::max(2 * tau_q, 1.0) *
                   std::ldexp(std::sqrt(std::ldexp(1.0, int(m))), -int(m));
      CHECK(r.bound == doctest::Approx(rhs));
    }
  }

  // determinism: identical config, second directory, identical CSV after
  // masking the timing column; the manifest echoes the config
  auto cfg2 = cfg;
  cfg2.output_dir = temp_dir("mult1d_b").string();
  auto outcome2 = run_scenario(cfg2);
  REQUIRE(outcome2.exit_code == 0);
  CHECK(strip_wall(slurp(fs::path(cfg.output_dir) / "results.csv")) ==
        strip_wall(slurp(fs::path(cfg2.output_dir) / "results.csv")));
  auto manifest = nlohmann::json::parse(
      slurp(fs::path(cfg.output_dir) / "manifest.json"));
  CHECK(manifest.at("config").at("scenario") == "mult1d");
  CHECK(manifest.at("config").at("seed") == 7);
}

TEST_CASE("multnd run") {
  ScenarioConfig cfg;
  cfg.scenario = "multnd";
  cfg.d = 64;  // 8 x 8 grid
  cfg.n = 2;
  cfg.mesh = "uniform";
  cfg.psis = {"pow(1/2)"};
  cfg.m_min = 0;
  cfg.m_max = 3;
  cfg.seed = 7;
  cfg.output_dir = temp_dir("multnd").string();
  auto outcome = run_scenario(cfg);
  REQUIRE(outcome.exit_code == 0);
  for (const auto& r : outcome.rows) {
    CHECK(r.bound - r.measured >= -1e-9 * std::max(1.0, r.bound));
    if (r.metric == "tau_pm")
      CHECK(r.bound ==
            doctest::Approx(std::ldexp(1.0 / 64.0, 2 * int(r.index))));
  }
  // d not a perfect square: config error
  auto bad = cfg;
  bad.d = 60;
  CHECK(run_scenario(bad).exit_code == 2);
}

TEST_CASE("appendixA run") {
  ScenarioConfig cfg;
  cfg.scenario = "appendixA";
  cfg.d = 64;
  cfg.mesh = "uniform";
  cfg.spaces = {"ln1(2)"};
  cfg.k_max = 4;
  cfg.seed = 3;
  cfg.output_dir = temp_dir("appa").string();
  auto outcome = run_scenario(cfg);
  REQUIRE(outcome.exit_code == 0);
  for (const auto& r : outcome.rows) {
    if (r.metric == "residual_e_cap_linf")
      CHECK(r.bound == doctest::Approx(std::ldexp(1.0, 3 - int(r.index))));
    CHECK(r.bound - r.measured >= -1e-9);
  }

  // L_1 target: precondition failure -> machine-readable nonzero exit
  auto bad = cfg;
  bad.spaces = {"l1"};
  auto fail = run_scenario(bad);
  CHECK(fail.exit_code == 3);
  CHECK(fail.error_kind == "precondition-error");
}

TEST_CASE("shift certificate run") {
  ScenarioConfig cfg;
  cfg.scenario = "shift_certificate";
  cfg.seed = 1;
  cfg.output_dir = temp_dir("shift").string();
  auto outcome = run_scenario(cfg);
  REQUIRE(outcome.exit_code == 0);
  auto result =
      nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / "result.json"));
  CHECK(result.at("trace").get<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(result.at("corner_trace").get<double>()) <= 1e-12);
  CHECK(result.at("certificate").get<double>() >= 0.5 - 1e-12);
}

TEST_CASE("sweep_psi run") {
  ScenarioConfig cfg;
  cfg.scenario = "sweep_psi";
  cfg.n = 1;
  cfg.psis = {"pow(1)", "pow(1/2)"};
  cfg.m_max = 20;
  cfg.k_max = 4;
  cfg.tau_q = 0.5;
  cfg.seed = 5;
  cfg.output_dir = temp_dir("sweep").string();
  auto outcome = run_scenario(cfg);
  REQUIRE(outcome.exit_code == 0);
  auto result =
      nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / "result.json"));
  REQUIRE(result.at("psis").size() == 2);
  CHECK(result.at("psis").at(0).at("verdict") == "embedded");
  CHECK(result.at("psis").at(0).at("select_mk").at(1).contains("unreachable"));
  CHECK(result.at("psis").at(1).at("verdict") == "not_embedded");
  // psi = t^{1/2}, n = 1: m_k = 2k
  CHECK(result.at("psis").at(1).at("select_mk").at(3).at("m_k") == 6);
  for (const auto& r : outcome.rows)
    CHECK(r.bound - r.measured >= -1e-9 * std::max(1.0, r.bound));
}

TEST_CASE("plot: deterministic bytes, empty input, schema checks") {
  ScenarioConfig cfg;
  cfg.scenario = "mult1d";
  cfg.d = 16;
  cfg.spaces = {};
  cfg.psis = {"pow(1/2)"};
  cfg.m_min = 0;
  cfg.m_max = 4;
  cfg.seed = 9;
  cfg.output_dir = temp_dir("plot").string();
  REQUIRE(run_scenario(cfg).exit_code == 0);
  fs::path csv = fs::path(cfg.output_dir) / "results.csv";
  fs::path svg1 = fs::path(cfg.output_dir) / "a.svg";
  fs::path svg2 = fs::path(cfg.output_dir) / "b.svg";
  plot_csv(csv.string(), "convergence", svg1.string());
  plot_csv(csv.string(), "convergence", svg2.string());
  CHECK(slurp(svg1) == slurp(svg2));
  CHECK(slurp(svg1).find("<svg") == 0);

  // empty CSV renders empty axes and succeeds
  fs::path empty_csv = fs::path(cfg.output_dir) / "empty.csv";
  {
    std::ofstream out(empty_csv);
    out << "scenario,d,n,index,space,metric,measured,bound,slack,wall_ms\n";
  }
  fs::path empty_svg = fs::path(cfg.output_dir) / "empty.svg";
  CHECK_NOTHROW(plot_csv(empty_csv.string(), "convergence",
                         empty_svg.string()));
  CHECK(slurp(empty_svg).find("<svg") == 0);

  // schema mismatch is an error
  fs::path bad_csv = fs::path(cfg.output_dir) / "bad.csv";
  {
    std::ofstream out(bad_csv);
    out << "a,b,c\n1,2,3\n";
  }
  CHECK_THROWS_AS(
      plot_csv(bad_csv.string(), "convergence",
               (fs::path(cfg.output_dir) / "bad.svg").string()),
      ValidationError);
  CHECK_THROWS_AS(plot_csv(csv.string(), "histogram",
                           (fs::path(cfg.output_dir) / "x.svg").string()),
                  ValidationError);
}

TEST_CASE("operator JSON round trip") {
  kdiag_test::Rng rng(97001);
  for (int trial = 0; trial < 30; ++trial) {
    auto alg = kdiag_test::random_algebra(rng);
    auto x = kdiag_test::random_op(rng, alg);
    auto round = matop_from_json(matop_to_json(x));
    CHECK(round.algebra()->same_as(*alg));
    CHECK((round - x).max_abs_entry() == 0.0);  // exact number round trip
  }
  // tuples too
  auto alg = make_simple_algebra(4, 0.25);
  auto a = MatOp::diagonal(alg, {Eigen::Vector4d(0.1, 0.2, 0.3, 0.4)});
  auto round = tuple_from_json(tuple_to_json(HermTuple({a})));
  CHECK(round.n() == 1);
  CHECK((round.entry(0) - a).max_abs_entry() == 0.0);

  CHECK_THROWS_AS(matop_from_json("{not json"), ValidationError);
}

TEST_CASE("eigen tuple csv dump") {
  auto alg = make_simple_algebra(2, 1.0);
  auto a = MatOp::diagonal(alg, {Eigen::Vector2d(0.25, 0.75)});
  auto J = joint_diagonalize(HermTuple({a}));
  std::string csv = eigen_tuples_csv(J);
  CHECK(csv.find("block,col,lambda_1\n") == 0);
  CHECK(csv.find("0,0,0.25") != std::string::npos);
}
