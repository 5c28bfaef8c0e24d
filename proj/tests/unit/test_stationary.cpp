#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ergotrack/errors.hpp"
#include "ergotrack/stationary.hpp"

using namespace ergotrack;

namespace {

const Matrix one = Matrix::Identity(1, 1);

EpsilonScaling unit_scaling() {
  return derive_exponents(0.5, make_quadratic_cost(one, one, Vector::Ones(1), Vector::Ones(1)));
}

ImpulseTriplet impulse(double L) {
  return {LinearFeedback::zero(1), EllipsoidDomain::interval(L), JumpRule::proportional(1.0),
          QuadraticPotential::squared_norm(1)};
}

SingularTriplet singular(double L) {
  return {LinearFeedback::zero(1), EllipsoidDomain::interval(L), DirectionField::radial(),
          QuadraticPotential::squared_norm(1)};
}

RegularPolicy ou(double s) {
  return {LinearFeedback::constant(Matrix::Constant(1, 1, s)), QuadraticPotential::squared_norm(1), 1.0,
          1.0};
}

// total variation between a 1D histogram pair and a density given by its cdf
template <class Cdf>
double tv_to(const OccupationPair& p, double width, Cdf cdf) {
  double tv = 0.0;
  for (Eigen::Index i = 0; i < p.interior_mass.size(); ++i) {
    const double c = p.interior_points(0, i);
    tv += std::abs(p.interior_mass(i) - (cdf(c + width / 2) - cdf(c - width / 2)));
  }
  return 0.5 * tv;
}

OracleProblem problem_for(const StrategySpec& s, double cells) {
  const auto p = oracle_problem_for(s, one, 0.0, 0.0);
  auto q = p;
  q.h = p.h * 200.0 / cells;
  return q;
}

}  // namespace

TEST_CASE("empirical occupation: reflected Brownian motion") {
  const double L = 1.0;
  const auto p = run_singular(singular(L), TargetModel::constant(Vector::Zero(1), one), unit_scaling(), 1.0,
                              20000.0, 21);
  const std::size_t bins = 20;
  const auto pair = empirical_occupation(p, 0.1, OccupationGrid::symmetric(1, L, bins));
  CHECK(pair.interior_total() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(tv_to(pair, 2 * L / bins, [&](double y) { return std::clamp((y + L) / (2 * L), 0.0, 1.0); }) < 0.05);
  CHECK(pair.total_boundary_mass() == doctest::Approx(1.0 / (2 * L)).epsilon(0.1));
}

TEST_CASE("empirical occupation: impulse") {
  const double L = 1.0;
  SimulationOptions o;
  o.bridge_correction = true;
  const auto p = run_impulse(impulse(L), TargetModel::constant(Vector::Zero(1), one), unit_scaling(), 1.0,
                             20000.0, 22, o);
  const std::size_t bins = 20;
  const auto pair = empirical_occupation(p, 0.1, OccupationGrid::symmetric(1, L, bins));
  // cdf of (L - |y|) / L^2
  auto cdf = [&](double y) {
    y = std::clamp(y, -L, L);
    return y < 0 ? (L + y) * (L + y) / (2 * L * L) : 1.0 - (L - y) * (L - y) / (2 * L * L);
  };
  CHECK(tv_to(pair, 2 * L / bins, cdf) < 0.05);
  CHECK(pair.total_boundary_mass() == doctest::Approx(1.0 / (L * L)).epsilon(0.1));
  CHECK_THROWS(empirical_occupation(p, 1.0, OccupationGrid::symmetric(1, L, bins)));
}

TEST_CASE("empirical occupation: OU variance") {
  const auto p = run_regular(ou(1.0), TargetModel::constant(Vector::Zero(1), one), unit_scaling(), 1.0,
                             5000.0, 23);
  const auto pair = empirical_occupation(p, 0.1, OccupationGrid::symmetric(1, 5.0, 400));
  CHECK(pair.covariance()(0, 0) == doctest::Approx(0.5).epsilon(0.05));
  CHECK(pair.total_boundary_mass() == 0.0);
}

TEST_CASE("separability residual: point mass detects non-stationarity") {
  OccupationPair p;
  p.interior_points = Matrix::Zero(1, 1);
  p.interior_mass = Vector::Ones(1);
  p.boundary_points = Matrix(1, 0);
  p.boundary_mass = Vector(0);
  TestFunction sq{"x^2", [](const Vector& x) { return x.squaredNorm(); },
                  [](const Vector& x) { return Vector(2 * x); },
                  [](const Vector& x) { return Matrix(2 * Matrix::Identity(x.size(), x.size())); }};
  GeneratorSpec gen{one, LinearFeedback::zero(1), 0.0};
  BoundarySpec none;
  CHECK(separability_residual(p, gen, none, {sq}).max_abs == doctest::Approx(1.0));
}

TEST_CASE("separability residual: exact impulse pair") {
  const double L = 1.3;
  const int n = 2000;
  OccupationPair p;
  p.kind = BoundaryKind::jump;
  p.interior_points.resize(1, n);
  p.interior_mass.resize(n);
  for (int i = 0; i < n; ++i) {
    const double y = -L + (i + 0.5) * 2 * L / n;
    p.interior_points(0, i) = y;
    p.interior_mass(i) = (L - std::abs(y)) / (L * L) * 2 * L / n;
  }
  p.interior_mass /= p.interior_mass.sum();
  p.boundary_points.resize(1, 2);
  p.boundary_points << -L, L;
  p.boundary_mass = Vector::Constant(2, 0.5 / (L * L));
  BoundarySpec b;
  b.kind = BoundaryKind::jump;
  b.jump = JumpRule::proportional(1.0);
  b.domain = EllipsoidDomain::interval(L);
  const auto res = separability_residual(p, {one, LinearFeedback::zero(1), 0.0}, b,
                                         polynomial_test_functions(1, 4, L));
  CHECK(res.max_abs < 1e-5);
}

TEST_CASE("oracle: impulse, singular and regular against exact pairs") {
  const double L = 1.2;
  const auto cost = make_quadratic_cost(one, one, Vector::Ones(1), Vector::Ones(1));
  {
    const StrategySpec s = impulse(L);
    const auto r = markov_chain_oracle(problem_for(s, 400));
    CHECK(r.pair.interior_total() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.pair.total_boundary_mass() == doctest::Approx(1.0 / (L * L)).epsilon(1e-3));
    CHECK(r.pair.integrate([](const Vector& x) { return x(0) * x(0); }) ==
          doctest::Approx(L * L / 6).epsilon(1e-3));
    const auto c = limit_cost_from_pair(r.pair, s, cost, 0.0);
    CHECK(c.value == doctest::Approx(analytic_limit_cost(s, one, cost, 0.0)->value).epsilon(1e-3));
    CHECK(c.value == doctest::Approx(c.deviation + c.regular + c.fixed + c.proportional));
  }
  {
    const StrategySpec s = singular(L);
    const auto r = markov_chain_oracle(problem_for(s, 400));
    CHECK(r.pair.total_boundary_mass() == doctest::Approx(1.0 / (2 * L)).epsilon(1e-3));
    CHECK(r.pair.integrate([](const Vector& x) { return x(0) * x(0); }) ==
          doctest::Approx(L * L / 3).epsilon(1e-3));
  }
  {
    const StrategySpec s = ou(1.0);
    const auto r = markov_chain_oracle(problem_for(s, 400));
    CHECK(r.pair.covariance()(0, 0) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(r.pair.integrate([](const Vector& x) { return std::pow(x(0), 4); }) ==
          doctest::Approx(0.75).epsilon(3e-3));
  }
}

TEST_CASE("oracle: residual shrinks under refinement") {
  const double L = 1.0;
  BoundarySpec b;
  b.kind = BoundaryKind::reflection;
  b.direction = DirectionField::radial();
  b.domain = EllipsoidDomain::interval(L);
  const auto tests = polynomial_test_functions(1, 4, L);
  double prev = 1e9;
  for (double cells : {100.0, 200.0, 400.0}) {
    const auto r = markov_chain_oracle(problem_for(StrategySpec(singular(L)), cells));
    const double res = separability_residual(r.pair, {one, LinearFeedback::zero(1), 0.0}, b, tests).max_abs;
    CHECK(res < prev);
    prev = res;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("oracle: two methods and uniqueness") {
  const auto prob = problem_for(StrategySpec(impulse(1.0)), 200);
  OracleOptions power;
  power.method = OracleMethod::power;
  OracleOptions direct;
  direct.method = OracleMethod::direct;
  const auto a = markov_chain_oracle(prob, power);
  const auto b = markov_chain_oracle(prob, direct);
  CHECK((a.stationary - b.stationary).lpNorm<1>() < 1e-8);
  CHECK(a.iterations > 0);
  CHECK(uniqueness_probe(prob, 5, 3, power) < 1e-8);
}

TEST_CASE("oracle: 2D impulse on a disc is rotation invariant") {
  ImpulseTriplet tr{LinearFeedback::zero(2), EllipsoidDomain::ellipsoid(Matrix::Identity(2, 2)),
                    JumpRule::proportional(1.0), QuadraticPotential::squared_norm(2)};
  auto prob = oracle_problem_for(tr, Matrix::Identity(2, 2), 0.0, 0.04);
  const auto r = markov_chain_oracle(prob);
  const Matrix cov = r.pair.covariance();
  CHECK(cov(0, 0) == doctest::Approx(cov(1, 1)).epsilon(1e-3));
  CHECK(std::abs(cov(0, 1)) < 1e-6);
  // exit time of planar Brownian motion from the unit disc is 1/2
  CHECK(r.pair.total_boundary_mass() == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("oracle rejects coarse grids and d > 2") {
  auto prob = problem_for(StrategySpec(impulse(1.0)), 10);
  CHECK_THROWS(MarkovChainOracle(prob));
  ImpulseTriplet tr{LinearFeedback::zero(3), EllipsoidDomain::ellipsoid(Matrix::Identity(3, 3)),
                    JumpRule::proportional(1.0), QuadraticPotential::squared_norm(3)};
  CHECK_THROWS(MarkovChainOracle(oracle_problem_for(tr, Matrix::Identity(3, 3), 0.0, 0.1)));
}

TEST_CASE("limit cost examples") {
  const auto cost = make_quadratic_cost(one, one, Vector::Ones(1), Vector::Zero(1));
  LimitEstimateOptions o;
  const double Li = std::pow(6.0, 0.25);
  const auto ci = limit_cost(impulse(Li), one, cost, 0.0, o);
  CHECK(ci.value == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-3));
  CHECK(ci.std_error < 1e-3);

  auto scost = make_quadratic_cost(one, one, Vector::Zero(1), Vector::Ones(1));
  const double Ls = std::cbrt(0.75);
  CHECK(limit_cost(singular(Ls), one, scost, 0.0, o).value == doctest::Approx(0.8254818122236567).epsilon(1e-3));

  CHECK(limit_cost(ou(1.0), one, cost, 0.0, o).value == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(analytic_limit_cost(ou(1.0), one, cost, 0.0)->value == doctest::Approx(1.0));
  CHECK(analytic_limit_cost(ou(2.0), one, cost, 0.0)->value == doctest::Approx(1.25));
}

TEST_CASE("simulation estimator agrees with the oracle") {
  const auto cost = make_quadratic_cost(one, one, Vector::Ones(1), Vector::Zero(1));
  LimitEstimateOptions o;
  o.estimator = LimitEstimator::simulation;
  o.simulation.horizon = 2000.0;
  o.simulation.replications = 6;
  const StrategySpec s = ou(1.0);
  const auto sim = limit_cost(s, one, cost, 0.0, o);
  const auto exact = *analytic_limit_cost(s, one, cost, 0.0);
  CHECK(sim.std_error > 0.0);
  CHECK_NOTHROW(check_estimator_consistency(sim, exact, 0.01));
  LimitCost far = exact;
  far.value += 1.0;
  CHECK_THROWS_AS(check_estimator_consistency(sim, far, 0.0), ConsistencyAlarm);
}

TEST_CASE("integrate limit over time") {
  CHECK(integrate_limit_over_time([](double) { return 0.7; }, 3.0, 5) == doctest::Approx(2.1));
  CHECK(integrate_limit_over_time([](double) { return 0.7; }, 0.0, 5) == 0.0);
  const double trace = std::sqrt(2.0 / 3.0);
  const double v = integrate_limit_over_time([&](double t) { return trace * std::sqrt(1.0 + t); }, 1.0, 2001);
  CHECK(v == doctest::Approx(0.9952696638871846).epsilon(1e-7));
  const auto lc = integrate_limit_over_time(
      [](double) { return LimitCost{1.0, 0.1, 0.4, 0.0, 0.6, 0.0}; }, 2.0, 3);
  CHECK(lc.value == doctest::Approx(2.0));
  CHECK(lc.fixed == doctest::Approx(1.2));
}

TEST_CASE("occupation csv and transforms") {
  const auto r = markov_chain_oracle(problem_for(StrategySpec(impulse(1.0)), 40));
  std::ostringstream os;
  write_occupation_csv(os, r.pair);
  CHECK(os.str().find('\n') != std::string::npos);
  const auto t = r.pair.transformed(2.0, 0.25);
  CHECK(t.covariance()(0, 0) == doctest::Approx(4.0 * r.pair.covariance()(0, 0)));
  CHECK(t.total_boundary_mass() == doctest::Approx(0.25 * r.pair.total_boundary_mass()));
}
