#ifndef ERGOTRACK_SDE_ENGINE_HPP
#define ERGOTRACK_SDE_ENGINE_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>

#include "ergotrack/linalg.hpp"

namespace ergotrack {

/// Uniform simulation grid on [t_start, t_end].
struct TimeGrid {
  double t_start = 0.0;
  double t_end = 0.0;
  double dt = 1.0;
  std::size_t n_steps = 0;

  /// Grid whose step is the largest value <= max_dt that divides the interval.
  static TimeGrid covering(double t_start, double t_end, double max_dt);
  static TimeGrid with_steps(double t_start, double t_end, std::size_t n_steps);

  double time(std::size_t i) const { return t_start + static_cast<double>(i) * dt; }
  double length() const { return t_end - t_start; }

  /// Throws std::invalid_argument if dt <= 0 or n_steps disagrees with the span.
  void validate() const;
};

/// splitmix64 finalizer over (base, stream); used to derive independent seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Seeded standard-normal source. Identical seeds give identical sequences.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}
  double next() { return normal_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Seeded U[0,1) source.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : engine_(seed) {}
  double next() { return uniform_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Scalar Ornstein-Uhlenbeck factor dF = kappa (mean - F) dt + vol dB, F_0 = initial.
struct FactorSpec {
  double kappa = 1.0;
  double mean = 0.0;
  double vol = 0.0;
  double initial = 0.0;
};

/// Coefficients of the target dX°_t = b_t dt + sqrt(a_t) dW_t, X°_0 = 0.
///
/// b and a are evaluated from time and the current value of the optional
/// auxiliary factor (0 when no factor is configured), which keeps them
/// predictable and deterministic given the factor path.
struct TargetModel {
  using DriftFn = std::function<Vector(double t, double factor)>;
  using DiffusionFn = std::function<Matrix(double t, double factor)>;

  std::size_t dim = 1;
  DriftFn drift;
  DiffusionFn diffusion;
  std::optional<FactorSpec> factor;

  static TargetModel constant(const Vector& b, const Matrix& a);
};

struct TargetPath {
  TimeGrid grid;
  Matrix values;     ///< d x (n+1), column i is X°(t_i)
  Matrix brownian;   ///< d x n, column i is W(t_{i+1}) - W(t_i)
  std::vector<Matrix> diffusion_values;  ///< a(t_i), i = 0..n
  Vector factor_values;                  ///< F(t_i), zeros without a factor
};

/// d x n matrix of independent N(0, dt) draws.
Matrix brownian_increments(const TimeGrid& grid, std::size_t dim, std::uint64_t seed);

/// Euler-Maruyama path. Brownian increments are exactly those returned by
/// brownian_increments(grid, model.dim, seed).
TargetPath simulate_target(const TargetModel& model, const TimeGrid& grid, std::uint64_t seed);

/// Streaming form of simulate_target used by the controlled simulations.
class TargetStepper {
 public:
  TargetStepper(const TargetModel& model, double dt, std::uint64_t seed);

  /// Increment X°(t + dt) - X°(t) with coefficients frozen at t. Advances
  /// the factor to t + dt.
  const Vector& step(double t);

  double factor() const { return factor_; }
  /// a(t, F) at the current factor value; the last Cholesky factor is cached.
  const Matrix& diffusion_at(double t);

 private:
  const TargetModel& model_;
  double dt_;
  double sqrt_dt_;
  GaussianStream noise_;
  GaussianStream factor_noise_;
  double factor_;
  Vector increment_;
  Vector dw_;
  Matrix a_;
  Matrix chol_;
};

}  // namespace ergotrack

#endif  // ERGOTRACK_SDE_ENGINE_HPP
