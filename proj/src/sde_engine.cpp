#include "ergotrack/sde_engine.hpp"

#include <cmath>
#include <stdexcept>

#include "ergotrack/errors.hpp"

namespace ergotrack {

TimeGrid TimeGrid::covering(double t_start, double t_end, double max_dt) {
  if (!(max_dt > 0.0)) throw std::invalid_argument("time step must be positive");
  if (t_end < t_start) throw std::invalid_argument("t_end must not precede t_start");
  const double span = t_end - t_start;
  auto n = static_cast<std::size_t>(std::ceil(span / max_dt - 1e-9));
  if (n == 0) return TimeGrid{t_start, t_end, max_dt, 0};
  return TimeGrid{t_start, t_end, span / static_cast<double>(n), n};
}

TimeGrid TimeGrid::with_steps(double t_start, double t_end, std::size_t n_steps) {
  if (n_steps == 0) throw std::invalid_argument("with_steps needs at least one step");
  if (!(t_end > t_start)) throw std::invalid_argument("t_end must exceed t_start");
  return TimeGrid{t_start, t_end, (t_end - t_start) / static_cast<double>(n_steps), n_steps};
}

void TimeGrid::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("time step must be positive");
  const double expected = std::round((t_end - t_start) / dt);
  if (expected < 0.0 || static_cast<std::size_t>(expected) != n_steps) {
    throw std::invalid_argument("n_steps inconsistent with (t_end - t_start) / dt");
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TargetModel TargetModel::constant(const Vector& b, const Matrix& a) {
  if (a.rows() != b.size() || a.cols() != b.size()) {
    throw std::invalid_argument("drift and diffusion dimensions differ");
  }
  TargetModel m;
  m.dim = static_cast<std::size_t>(b.size());
  m.drift = [b](double, double) { return b; };
  m.diffusion = [a](double, double) { return a; };
  return m;
}

Matrix brownian_increments(const TimeGrid& grid, std::size_t dim, std::uint64_t seed) {
  grid.validate();
  Matrix out(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(grid.n_steps));
  GaussianStream g(seed);
  const double s = std::sqrt(grid.dt);
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = s * g.next();
  }
  return out;
}

TargetStepper::TargetStepper(const TargetModel& model, double dt, std::uint64_t seed)
    : model_(model),
      dt_(dt),
      sqrt_dt_(std::sqrt(dt)),
      noise_(seed),
      factor_noise_(derive_seed(seed, 1)),
      factor_(model.factor ? model.factor->initial : 0.0),
      increment_(static_cast<Eigen::Index>(model.dim)),
      dw_(static_cast<Eigen::Index>(model.dim)) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  if (!model.drift || !model.diffusion) throw std::invalid_argument("target model is incomplete");
}

const Matrix& TargetStepper::diffusion_at(double t) {
  a_ = model_.diffusion(t, factor_);
  return a_;
}

const Vector& TargetStepper::step(double t) {
  const Vector b = model_.drift(t, factor_);
  const Matrix& a = diffusion_at(t);
  if (b.size() != increment_.size() || a.rows() != increment_.size()) {
    throw std::invalid_argument("target coefficients have wrong dimension");
  }
  chol_ = diffusion_factor(a);
  for (Eigen::Index i = 0; i < dw_.size(); ++i) dw_(i) = sqrt_dt_ * noise_.next();
  increment_.noalias() = b * dt_ + chol_ * dw_;
  if (model_.factor) {
    const FactorSpec& f = *model_.factor;
    factor_ += f.kappa * (f.mean - factor_) * dt_ + f.vol * sqrt_dt_ * factor_noise_.next();
  }
  return increment_;
}

TargetPath simulate_target(const TargetModel& model, const TimeGrid& grid, std::uint64_t seed) {
  grid.validate();
  const auto d = static_cast<Eigen::Index>(model.dim);
  const auto n = static_cast<Eigen::Index>(grid.n_steps);
  TargetPath path;
  path.grid = grid;
  path.values = Matrix::Zero(d, n + 1);
  path.brownian.resize(d, n);
  path.factor_values = Vector::Zero(n + 1);
  path.diffusion_values.reserve(static_cast<std::size_t>(n + 1));

  GaussianStream noise(seed);
  GaussianStream factor_noise(derive_seed(seed, 1));
  double factor = model.factor ? model.factor->initial : 0.0;
  const double s = std::sqrt(grid.dt);
  Vector dw(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = grid.time(static_cast<std::size_t>(i));
    const Vector b = model.drift(t, factor);
    Matrix a = model.diffusion(t, factor);
    const Matrix l = diffusion_factor(a);
    for (Eigen::Index k = 0; k < d; ++k) dw(k) = s * noise.next();
    path.brownian.col(i) = dw;
    path.values.col(i + 1) = path.values.col(i) + b * grid.dt + l * dw;
    path.factor_values(i) = factor;
    path.diffusion_values.push_back(std::move(a));
    if (model.factor) {
      const FactorSpec& f = *model.factor;
      factor += f.kappa * (f.mean - factor) * grid.dt + f.vol * s * factor_noise.next();
    }
  }
  path.factor_values(n) = factor;
  path.diffusion_values.push_back(model.diffusion(grid.t_end, factor));
  return path;
}

}  // namespace ergotrack
