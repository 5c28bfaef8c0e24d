#include <doctest.h>

#include <cmath>

#include "ergotrack/cost_model.hpp"

using namespace ergotrack;

namespace {

CostSpec base_cost() {
  return make_quadratic_cost(Matrix::Identity(1, 1), Matrix::Identity(1, 1), Vector::Ones(1),
                             Vector::Ones(1));
}

ControlledPath flat_path(double value, double T, std::size_t n) {
  ControlledPath p;
  p.kind = StrategyKind::impulse;
  p.grid = TimeGrid::with_steps(0.0, T, n);
  p.deviation = Matrix::Constant(1, n + 1, value);
  p.target = Matrix::Constant(1, n + 1, -value);
  p.controls = Matrix::Zero(1, n + 1);
  p.factor = Vector::Zero(n + 1);
  return p;
}

}  // namespace

TEST_CASE("derive_exponents") {
  auto c = base_cost();
  auto s = derive_exponents(0.25, c);
  CHECK(s.beta_Q == doctest::Approx(1.0));
  CHECK(s.beta_F == doctest::Approx(1.0));
  CHECK(s.beta_P == doctest::Approx(0.75));
  s = derive_exponents(0.5, c);
  CHECK(s.beta_Q == doctest::Approx(2.0));
  CHECK(s.beta_F == doctest::Approx(2.0));
  CHECK(s.beta_P == doctest::Approx(1.5));
  c.Q = HomogeneousFunction::custom("cubic", 3.0, [](const Vector& u) { return std::pow(u.norm(), 3); });
  CHECK(derive_exponents(0.25, c).beta_Q == doctest::Approx(1.25));
  CHECK_THROWS(derive_exponents(0.0, c));
  CHECK_THROWS(derive_exponents(-1.0, c));
}

TEST_CASE("exponent ratio identities") {
  const auto c = base_cost();
  for (double beta : {0.1, 0.25, 1.0 / 3.0, 0.5, 0.9}) {
    const auto s = derive_exponents(beta, c);
    CHECK(std::abs(s.beta_F / (2.0 + 2.0 - 0.0) / beta - 1.0) < 1e-14);
    CHECK(std::abs(s.beta_P / (2.0 + 2.0 - 1.0) / beta - 1.0) < 1e-14);
    CHECK(std::abs(s.beta_Q / (2.0 + 2.0) / beta - 1.0) < 1e-14);
  }
}

TEST_CASE("eval_cost examples") {
  const auto c = base_cost();
  const auto s = derive_exponents(0.25, c);
  auto zero = flat_path(0.0, 1.0, 100);
  const auto b0 = eval_cost(zero, c, s, 0.1);
  CHECK(b0.total == 0.0);

  auto flat = flat_path(0.7, 2.0, 50);
  CHECK(eval_cost(flat, c, s, 0.1).deviation_term == doctest::Approx(0.49 * 2.0));

  auto jump = flat_path(0.0, 1.0, 10);
  jump.jumps.push_back({0.5, 5, Vector::Constant(1, 0.3), Vector::Constant(1, -0.3)});
  const double eps = 0.1;
  const auto bj = eval_cost(jump, c, s, eps);
  CHECK(bj.fixed_term == doctest::Approx(std::pow(eps, s.beta_F)));
  CHECK(bj.proportional_term == doctest::Approx(0.3 * std::pow(eps, s.beta_P)));
  CHECK(bj.total == doctest::Approx(bj.fixed_term + bj.proportional_term));

  auto broken = flat_path(0.0, 1.0, 10);
  broken.deviation = Matrix::Zero(1, 5);
  CHECK_THROWS(eval_cost(broken, c, s, eps));
}

TEST_CASE("eval_cost is additive over time windows") {
  const auto c = base_cost();
  const auto s = derive_exponents(0.5, c);
  auto p = flat_path(0.0, 1.0, 100);
  for (Eigen::Index i = 0; i <= 100; ++i) p.deviation(0, i) = std::sin(0.1 * i);
  p.controls.row(0) = p.deviation.row(0) * -1.0;
  p.jumps.push_back({0.3, 30, Vector::Constant(1, 1.0), Vector::Constant(1, -1.0)});
  p.jumps.push_back({0.8, 80, Vector::Constant(1, 1.0), Vector::Constant(1, -0.5)});
  const auto whole = eval_cost(p, c, s, 0.2);
  const auto sum = eval_cost(p, c, s, 0.2, 0, 40) + eval_cost(p, c, s, 0.2, 40, 100);
  CHECK(whole.total == doctest::Approx(sum.total).epsilon(1e-13));
  CHECK(whole.fixed_term == doctest::Approx(sum.fixed_term));
}

TEST_CASE("renormalize") {
  const auto c = base_cost();
  const auto s = derive_exponents(0.25, c);
  CostBreakdown b{1.0, 2.0, 3.0, 4.0, 10.0};
  CHECK(renormalize(b, 1.0, s).total == 10.0);
  CHECK(s.renormalization(1e-2) == doctest::Approx(10.0));
  CHECK(renormalize(b, 1e-2, s).fixed_term == doctest::Approx(30.0));
  CHECK(renormalize(CostBreakdown{}, 1e-2, s).total == 0.0);
  CHECK(renormalize(b.scaled(3.0), 0.3, s).total == doctest::Approx(3.0 * renormalize(b, 0.3, s).total));
}

TEST_CASE("homogeneity checks") {
  Matrix sig(2, 2);
  sig << 2.0, 0.3, 0.3, 1.0;
  auto c = make_quadratic_cost(sig, Matrix::Identity(2, 2), Vector::Ones(2), Vector::Constant(2, 0.5));
  const auto samples = default_homogeneity_samples(2, 200);
  CHECK(check_homogeneity(c, samples) < 1e-12);

  c.F = HomogeneousFunction::indicator(2.0);
  CHECK(check_homogeneity(c, samples) < 1e-12);

  c.D = HomogeneousFunction::custom("shifted", 2.0, [](const Vector& x) { return x.squaredNorm() + 1.0; });
  CHECK(check_homogeneity(c, samples) > 0.5);
}

TEST_CASE("cost validation") {
  auto c = base_cost();
  CHECK_NOTHROW(c.validate(1.0));
  c.r = TimeWeight{1.0, -2.0};
  CHECK_THROWS(c.validate(1.0));
  c = base_cost();
  c.Q = HomogeneousFunction::weighted_l1(Vector::Ones(1));
  CHECK_THROWS(c.validate(1.0));
}
