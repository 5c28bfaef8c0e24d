#include <doctest.h>

#include <cmath>

#include "ergotrack/sde_engine.hpp"

using namespace ergotrack;

TEST_CASE("brownian increments: moments") {
  const auto grid = TimeGrid::with_steps(0.0, 1e6, 1'000'000);
  const Matrix w = brownian_increments(grid, 1, 42);
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / (w.size() - 1);
  CHECK(std::abs(mean) < 4.0 / 1e3);
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("brownian increments: empty grid and determinism") {
  const TimeGrid empty{0.0, 0.0, 1.0, 0};
  CHECK(brownian_increments(empty, 2, 1).cols() == 0);
  const auto grid = TimeGrid::with_steps(0.0, 1.0, 100);
  CHECK(brownian_increments(grid, 2, 7) == brownian_increments(grid, 2, 7));
  CHECK(brownian_increments(grid, 2, 7) != brownian_increments(grid, 2, 8));
  TimeGrid bad{0.0, 1.0, -0.1, 10};
  CHECK_THROWS(brownian_increments(bad, 1, 1));
}

TEST_CASE("time grid covering") {
  const auto g = TimeGrid::covering(0.0, 1.0, 0.3);
  CHECK(g.n_steps == 4);
  CHECK(g.dt == doctest::Approx(0.25));
  CHECK(g.time(g.n_steps) == doctest::Approx(1.0));
}

TEST_CASE("simulate_target: trivial models") {
  const auto grid = TimeGrid::with_steps(0.0, 2.0, 200);
  auto zero = TargetModel::constant(Vector::Zero(2), Matrix::Zero(2, 2));
  const auto p0 = simulate_target(zero, grid, 3);
  CHECK(p0.values.isZero(0.0));

  auto drift = TargetModel::constant(Vector::Constant(1, 1.5), Matrix::Zero(1, 1));
  const auto p1 = simulate_target(drift, grid, 3);
  CHECK(p1.values(0, 0) == 0.0);
  CHECK(p1.values(0, 200) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("simulate_target: terminal variance") {
  const double sigma2 = 2.0;
  const double T = 1.5;
  auto model = TargetModel::constant(Vector::Zero(1), Matrix::Constant(1, 1, sigma2));
  const auto grid = TimeGrid::with_steps(0.0, T, 10);
  const int n = 10000;
  double s = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = simulate_target(model, grid, derive_seed(5, i)).values(0, 10);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  const double se = sigma2 * T * std::sqrt(2.0 / n);
  CHECK(std::abs(var - sigma2 * T) < 3.0 * se);
}

TEST_CASE("simulate_target: factor path is reproducible") {
  auto model = TargetModel::constant(Vector::Zero(1), Matrix::Identity(1, 1));
  model.factor = FactorSpec{2.0, 0.0, 0.5, 0.1};
  auto base = model.diffusion;
  model.diffusion = [base](double t, double f) { return Matrix(base(t, f) * std::exp(0.5 * f)); };
  const auto grid = TimeGrid::with_steps(0.0, 1.0, 100);
  const auto a = simulate_target(model, grid, 9);
  const auto b = simulate_target(model, grid, 9);
  CHECK(a.values == b.values);
  CHECK(a.factor_values == b.factor_values);
  CHECK(a.factor_values(0) == 0.1);
  CHECK(a.factor_values.cwiseAbs().maxCoeff() > 0.1);
  for (const auto& m : a.diffusion_values) CHECK(m(0, 0) > 0.0);
}
