#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "ergotrack/errors.hpp"
#include "ergotrack/experiments.hpp"

using namespace ergotrack;

namespace {

std::filesystem::path config_dir() {
  const char* env = std::getenv("ERGOTRACK_CONFIG_DIR");
  return env ? std::filesystem::path(env) : std::filesystem::path("configs");
}

Scenario load(const std::string& name) { return load_scenario(config_dir() / (name + ".json")); }

std::string sweep_csv(const Scenario& sc) {
  std::ostringstream os;
  write_sweep_csv(os, run_sweep(sc, SweepOptions{false, 3}));
  return os.str();
}

}  // namespace

TEST_CASE("parse and serialize round trip") {
  for (const char* name : {"impulse_1d_optimal", "singular_1d", "lq_1d", "lq_factor", "impulse_2d_optimal",
                           "impulse_ramp", "lq_1d_detuned", "impulse_1d_doubled"}) {
    CAPTURE(name);
    const Scenario a = load(name);
    const Scenario b = parse_scenario(scenario_to_json(a));
    CHECK(scenario_to_json(a) == scenario_to_json(b));
    CHECK(b.name == name);
    CHECK(b.epsilons == a.epsilons);
  }
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(parse_scenario("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"dim": 1, "strategy": {"type": "teleport"}})"), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"dim": 1, "epsilon": [0.1, 0.2]})"), ConfigError);
  CHECK_THROWS_AS(parse_scenario(R"({"dim": 1, "replications": 0})"), ConfigError);
  CHECK(parse_matrix("[1, 2]").isApprox(Vector(Eigen::Vector2d(1, 2)).asDiagonal().toDenseMatrix()));
  CHECK(parse_matrix("3")(0, 0) == 3.0);
}

TEST_CASE("validation") {
  CHECK(validate_scenario(load("impulse_1d_optimal")).pass);
  CHECK(validate_scenario(load("lq_1d")).pass);
  CHECK(validate_scenario(load("singular_1d")).pass);

  const auto bad = validate_scenario(load("invalid_zero_jump"));
  CHECK_FALSE(bad.pass);
  CHECK(bad.admissibility == doctest::Approx(0.0));

  Scenario wrong = load("impulse_1d_optimal");
  wrong.declared_degrees["D"] = 3.0;
  CHECK_FALSE(validate_scenario(wrong).pass);
  wrong.declared_degrees["D"] = 2.0;
  CHECK(validate_scenario(wrong).pass);
}

TEST_CASE("degenerate scenario has zero cost") {
  Scenario sc = load("impulse_1d_optimal");
  sc.target.diffusion = Matrix::Zero(1, 1);
  sc.target.drift = Vector::Zero(1);
  sc.replications = 3;
  const auto res = run_sweep(sc, SweepOptions{true, 2});
  for (const auto& row : res.rows) CHECK(row.mean.total == 0.0);
  CHECK(res.limit.mode == "degenerate");
  CHECK(res.limit.limit.value == 0.0);
}

TEST_CASE("sweep output is deterministic and thread independent") {
  Scenario sc = load("impulse_1d_optimal");
  sc.replications = 6;
  sc.epsilons = {0.2, 0.1};
  const std::string a = sweep_csv(sc);
  CHECK(a == sweep_csv(sc));
  sc.solver.threads = 1;
  std::ostringstream os;
  write_sweep_csv(os, run_sweep(sc, SweepOptions{false, 1}));
  CHECK(a == os.str());
  sc.base_seed += 1;
  CHECK(a != sweep_csv(sc));
}

TEST_CASE("job seeds are distinct") {
  const Scenario sc = load("lq_1d");
  CHECK(job_seed(sc, 0, 0) != job_seed(sc, 0, 1));
  CHECK(job_seed(sc, 0, 1) != job_seed(sc, 1, 0));
  CHECK(job_seed(sc, 2, 5) == job_seed(sc, 2, 5));
}

TEST_CASE("limits and suboptimality") {
  {
    const auto s = suboptimality_report(load("impulse_1d_optimal"));
    CHECK(s.ratio == doctest::Approx(1.0).epsilon(2e-3));
    CHECK(s.lower_bound == doctest::Approx(0.816496580927726).epsilon(1e-10));
  }
  {
    const auto s = suboptimality_report(load("impulse_1d_doubled"));
    CHECK(s.limit == doctest::Approx(1.7350552344714179).epsilon(2e-3));
    CHECK(s.ratio == doctest::Approx(2.125).epsilon(2e-3));
  }
  {
    const auto s = suboptimality_report(load("lq_1d_detuned"));
    CHECK(s.ratio == doctest::Approx(1.25).epsilon(2e-3));
  }
  {
    const auto s = suboptimality_report(load("lq_1d"));
    CHECK(s.ratio == doctest::Approx(1.0).epsilon(2e-3));
  }
  CHECK_THROWS_AS(suboptimality_report(load("singular_1d")), ConfigError);
}

TEST_CASE("time-varying weights") {
  const auto lim = scenario_limit(load("impulse_ramp"));
  REQUIRE(lim.lower_bound);
  CHECK(*lim.lower_bound == doctest::Approx(0.9952696638871846).epsilon(1e-6));
  // the optimal domain follows the weight, so the strategy attains the bound
  CHECK(lim.limit.value == doctest::Approx(*lim.lower_bound).epsilon(3e-3));
}

TEST_CASE("2D optimal impulse limit") {
  const auto lim = scenario_limit(load("impulse_2d_optimal"));
  REQUIRE(lim.lower_bound);
  CHECK(*lim.lower_bound == doctest::Approx(2.135779205069857).epsilon(1e-10));
  CHECK(lim.limit.value == doctest::Approx(*lim.lower_bound).epsilon(0.03));
}

TEST_CASE("random factor scenario") {
  Scenario sc = load("lq_factor");
  sc.replications = 8;
  sc.epsilons = {0.2, 0.1};
  CHECK(validate_scenario(sc).pass);
  const auto res = run_sweep(sc, SweepOptions{true, 2});
  REQUIRE(res.rows.size() == 2);
  for (const auto& row : res.rows) {
    CHECK(row.limit > 0.0);
    CHECK(row.path_identity < 1e-9);
    CHECK(std::isfinite(row.mean.total));
  }
  Scenario imp = load("impulse_ramp");
  imp.target.factor = FactorSpec{};
  CHECK_THROWS_AS(build_strategy(imp), ConfigError);
}

TEST_CASE("writers") {
  Scenario sc = load("lq_1d");
  sc.replications = 4;
  sc.epsilons = {0.2};
  const auto res = run_sweep(sc, SweepOptions{true, 2});
  std::ostringstream csv, js, plot;
  write_sweep_csv(csv, res);
  write_sweep_json(js, res);
  write_plot_data(plot, res);
  CHECK(csv.str().rfind("eps,replications,total", 0) == 0);
  CHECK(js.str().find("\"rows\"") != std::string::npos);
  CHECK(plot.str().find(std::to_string(std::log(0.2)).substr(0, 6)) != std::string::npos);
  const auto path = simulate_single(sc, 0.2, 0);
  CHECK(path.n_steps() > 0);
}
