#include "ergotrack/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "ergotrack/errors.hpp"

namespace ergotrack {

// ---------------------------------------------------------------------------
// EllipsoidDomain

EllipsoidDomain EllipsoidDomain::interval(double half_width) {
  if (!(half_width > 0.0)) throw std::invalid_argument("interval half-width must be positive");
  EllipsoidDomain g;
  g.dim_ = 1;
  g.ref_ = Matrix::Constant(1, 1, 1.0 / (half_width * half_width));
  return g;
}

EllipsoidDomain EllipsoidDomain::ellipsoid(const Matrix& shape) {
  if (!is_spd(shape)) throw std::invalid_argument("ellipsoid shape must be SPD");
  EllipsoidDomain g;
  g.dim_ = static_cast<std::size_t>(shape.rows());
  g.ref_ = symmetrize(shape);
  return g;
}

EllipsoidDomain EllipsoidDomain::dilated(const Matrix& ref_shape, ScaleFn scale) {
  EllipsoidDomain g = ellipsoid(ref_shape);
  g.scale_ = std::move(scale);
  return g;
}

EllipsoidDomain EllipsoidDomain::general(std::size_t dim, ShapeFn shape) {
  EllipsoidDomain g;
  g.dim_ = dim;
  g.general_ = std::move(shape);
  g.ref_ = g.general_(0.0);
  return g;
}

Matrix EllipsoidDomain::shape(double t) const {
  if (general_) return general_(t);
  const double s = scale(t);
  if (!(s > 0.0)) throw InvalidStrategy("domain scale must stay positive");
  return ref_ / (s * s);
}

double EllipsoidDomain::level(double t, const Vector& x) const {
  if (general_) return x.dot(general_(t) * x);
  const double s = scale(t);
  return x.dot(ref_ * x) / (s * s);
}

Vector EllipsoidDomain::radial_projection(double t, const Vector& x) const {
  const double lv = level(t, x);
  if (!(lv > 0.0)) throw std::invalid_argument("radial projection of the origin");
  return x / std::sqrt(lv);
}

Vector EllipsoidDomain::normal_projection(double t, const Vector& x) const {
  const Matrix a = shape(t);
  if (x.dot(a * x) <= 1.0) return x;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  const Vector lam = es.eigenvalues();
  const Vector w = es.eigenvectors().transpose() * x;
  // g(mu) = sum lam_i w_i^2 / (1 + mu lam_i)^2 - 1 is convex and decreasing.
  auto g = [&](double mu) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double q = 1.0 + mu * lam(i);
      s += lam(i) * w(i) * w(i) / (q * q);
    }
    return s - 1.0;
  };
  auto dg = [&](double mu) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double q = 1.0 + mu * lam(i);
      s -= 2.0 * lam(i) * lam(i) * w(i) * w(i) / (q * q * q);
    }
    return s;
  };
  double mu = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double gv = g(mu);
    if (std::abs(gv) < 1e-15) break;
    const double step = gv / dg(mu);
    mu -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, mu)) break;
  }
  Vector p(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) p(i) = w(i) / (1.0 + mu * lam(i));
  p = es.eigenvectors() * p;
  // remove residual drift off the surface
  return p / std::sqrt(p.dot(a * p));
}

double EllipsoidDomain::segment_exit(double t, const Vector& from, const Vector& to) const {
  const Matrix a = shape(t);
  const Vector d = to - from;
  const double qa = d.dot(a * d);
  const double qb = from.dot(a * d);
  const double qc = from.dot(a * from) - 1.0;
  if (qa <= 0.0) return 1.0;
  const double disc = std::max(qb * qb - qa * qc, 0.0);
  const double theta = (-qb + std::sqrt(disc)) / qa;
  return std::clamp(theta, 0.0, 1.0);
}

double EllipsoidDomain::ray_entry(double t, const Vector& from, const Vector& dir) const {
  const Matrix a = shape(t);
  const double qa = dir.dot(a * dir);
  const double qb = from.dot(a * dir);
  const double qc = from.dot(a * from) - 1.0;
  if (qc <= 0.0) return 0.0;
  if (qa <= 0.0) return -1.0;
  const double disc = qb * qb - qa * qc;
  if (disc < 0.0) return -1.0;
  const double s = (-qb - std::sqrt(disc)) / qa;
  return s > 0.0 ? s : -1.0;
}

std::vector<Vector> EllipsoidDomain::sample_boundary(double t, std::size_t n) const {
  const Matrix inv_root = sym_inv_sqrt(shape(t));
  std::vector<Vector> out;
  const auto d = static_cast<Eigen::Index>(dim_);
  if (dim_ == 1) {
    out.push_back(inv_root.col(0));
    out.push_back(-inv_root.col(0));
    return out;
  }
  out.reserve(n);
  if (dim_ == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
      Vector u(2);
      u << std::cos(ang), std::sin(ang);
      out.push_back(inv_root * u);
    }
    return out;
  }
  GaussianStream gs(derive_seed(0xB0B, n));
  for (std::size_t i = 0; i < n; ++i) {
    Vector u(d);
    for (Eigen::Index k = 0; k < d; ++k) u(k) = gs.next();
    out.push_back(inv_root * (u / u.norm()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rules and fields

JumpRule JumpRule::proportional(double alpha) {
  JumpRule r;
  r.alpha_ = [alpha](double) { return alpha; };
  return r;
}

JumpRule JumpRule::time_varying(std::function<double(double)> alpha) {
  JumpRule r;
  r.alpha_ = std::move(alpha);
  return r;
}

DirectionField DirectionField::radial() { return DirectionField{}; }

DirectionField DirectionField::inward_normal() {
  DirectionField f;
  f.kind_ = Kind::inward_normal;
  return f;
}

DirectionField DirectionField::custom(Fn fn) {
  DirectionField f;
  f.kind_ = Kind::custom;
  f.fn_ = std::move(fn);
  return f;
}

Vector DirectionField::operator()(double t, const Vector& x, const EllipsoidDomain& g) const {
  Vector v;
  switch (kind_) {
    case Kind::radial: v = -x; break;
    case Kind::inward_normal: v = -(g.shape(t) * x); break;
    case Kind::custom: v = fn_(t, x, g); break;
  }
  const double n1 = v.lpNorm<1>();
  if (!(n1 > 0.0)) throw InvalidStrategy("direction field vanishes on the boundary");
  return v / n1;
}

LinearFeedback LinearFeedback::zero(std::size_t dim) {
  LinearFeedback f;
  f.dim_ = dim;
  f.constant_ = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  return f;
}

LinearFeedback LinearFeedback::constant(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols()) throw std::invalid_argument("feedback matrix must be square");
  LinearFeedback f;
  f.dim_ = static_cast<std::size_t>(sigma.rows());
  f.constant_ = sigma;
  f.zero_ = sigma.isZero(0.0);
  return f;
}

LinearFeedback LinearFeedback::time_varying(std::size_t dim, std::function<Matrix(double)> sigma) {
  LinearFeedback f;
  f.dim_ = dim;
  f.sigma_ = std::move(sigma);
  f.constant_ = f.sigma_(0.0);
  f.zero_ = false;
  return f;
}

Vector LinearFeedback::operator()(double t, const Vector& x) const {
  if (zero_) return Vector::Zero(x.size());
  return -(sigma(t) * x);
}

QuadraticPotential QuadraticPotential::squared_norm(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return QuadraticPotential{Matrix::Identity(d, d), 0.0};
}

StrategyKind kind_of(const StrategySpec& s) {
  if (std::holds_alternative<ImpulseTriplet>(s)) return StrategyKind::impulse;
  if (std::holds_alternative<SingularTriplet>(s)) return StrategyKind::singular;
  return StrategyKind::regular;
}

std::size_t dim_of(const StrategySpec& s) {
  return std::visit(
      [](const auto& st) -> std::size_t {
        using T = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<T, RegularPolicy>) {
          return st.U.dim();
        } else {
          return st.G.dim();
        }
      },
      s);
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

struct Setup {
  TimeGrid grid;
  double eps_b;      // eps^beta
  double inv_eps_b;  // eps^-beta
};

Setup prepare(const TargetModel& model, std::size_t dim, const EpsilonScaling& scaling, double eps,
              double horizon, const SimulationOptions& options) {
  if (!(eps > 0.0) || eps > 1.0) throw std::invalid_argument("eps must lie in (0, 1]");
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (options.n_sub == 0) throw std::invalid_argument("n_sub must be positive");
  if (model.dim != dim) throw std::invalid_argument("strategy and target dimensions differ");
  const double eps_b = std::pow(eps, scaling.beta);
  const double max_dt = eps_b * eps_b / static_cast<double>(options.n_sub);
  return Setup{TimeGrid::covering(0.0, horizon, max_dt), eps_b, 1.0 / eps_b};
}

ControlledPath empty_path(StrategyKind kind, const Setup& s, std::size_t dim, double eps,
                          double beta) {
  ControlledPath p;
  p.kind = kind;
  p.grid = s.grid;
  p.eps = eps;
  p.beta = beta;
  const auto d = static_cast<Eigen::Index>(dim);
  const auto cols = static_cast<Eigen::Index>(s.grid.n_steps + 1);
  p.deviation = Matrix::Zero(d, cols);
  p.target = Matrix::Zero(d, cols);
  p.controls = Matrix::Zero(d, cols);
  p.factor = Vector::Zero(cols);
  return p;
}

void require_finite(const Vector& x, double t) {
  if (!x.allFinite()) {
    std::ostringstream os;
    os << "non-finite controlled state at t = " << t;
    throw NumericalError(os.str());
  }
}

// Regular control u^eps = eps^{-beta} U(t, eps^{-beta} x) (diffusive speed scaling).
Vector scaled_feedback(const LinearFeedback& u, double t, const Vector& x, const Setup& s) {
  if (u.is_zero()) return Vector::Zero(x.size());
  return s.inv_eps_b * u(t, s.inv_eps_b * x);
}

}  // namespace

ControlledPath run_impulse(const ImpulseTriplet& triplet, const TargetModel& model,
                           const EpsilonScaling& scaling, double eps, double horizon,
                           std::uint64_t seed, const SimulationOptions& options) {
  const std::size_t dim = triplet.G.dim();
  const Setup s = prepare(model, dim, scaling, eps, horizon, options);
  if (options.bridge_correction && dim != 1) {
    throw std::invalid_argument("bridge correction is only available in d = 1");
  }
  ControlledPath path = empty_path(StrategyKind::impulse, s, dim, eps, scaling.beta);
  TargetStepper stepper(model, s.grid.dt, seed);
  UniformStream uniform(derive_seed(seed, 2));
  const double dt = s.grid.dt;

  Vector x = Vector::Zero(static_cast<Eigen::Index>(dim));
  Vector xo = Vector::Zero(static_cast<Eigen::Index>(dim));

  auto apply_jump = [&](double t, std::size_t step, const Vector& boundary_unit, Vector& state) {
    const Vector landing = boundary_unit + triplet.xi(t, boundary_unit);
    if (!triplet.G.contains(t, landing)) {
      throw InvalidStrategy("jump rule lands outside the domain");
    }
    const Vector jump = s.eps_b * triplet.xi(t, boundary_unit);
    state += jump;
    path.jumps.push_back(JumpRecord{t, step, s.eps_b * boundary_unit, jump});
  };

  for (std::size_t i = 0; i < s.grid.n_steps; ++i) {
    const double t = s.grid.time(i);
    const double t1 = s.grid.time(i + 1);
    const auto c = static_cast<Eigen::Index>(i);
    path.factor(c) = stepper.factor();
    const Vector u = scaled_feedback(triplet.U, t, x, s);
    path.controls.col(c) = u;
    const double a_scalar = dim == 1 && options.bridge_correction ? stepper.diffusion_at(t)(0, 0) : 0.0;
    const Vector& dxo = stepper.step(t);
    xo += dxo;

    const Vector prev_unit = s.inv_eps_b * x;
    Vector pre = x - dxo + u * dt;
    require_finite(pre, t1);
    const Vector pre_unit = s.inv_eps_b * pre;

    if (!triplet.G.contains(t1, pre_unit)) {
      Vector y;
      if (triplet.G.in_closure(t1, prev_unit)) {
        const double theta = triplet.G.segment_exit(t1, prev_unit, pre_unit);
        y = prev_unit + theta * (pre_unit - prev_unit);
      } else {
        y = triplet.G.radial_projection(t1, pre_unit);
      }
      apply_jump(t1, i + 1, y, pre);
      // Overshoot past the boundary is kept, so a second jump can be needed
      // when it carries the state out again.
      int guard = 0;
      while (!triplet.G.contains(t1, s.inv_eps_b * pre)) {
        if (++guard > 1000) throw InvalidStrategy("jumps fail to bring the state back inside");
        apply_jump(t1, i + 1, triplet.G.radial_projection(t1, s.inv_eps_b * pre), pre);
      }
    } else if (options.bridge_correction && a_scalar > 0.0) {
      const double half = 1.0 / std::sqrt(triplet.G.shape(t1)(0, 0));
      const double var = a_scalar * dt * s.inv_eps_b * s.inv_eps_b;
      const double z0 = prev_unit(0);
      const double z1 = pre_unit(0);
      const double p_up = std::exp(-2.0 * (half - z0) * (half - z1) / var);
      const double p_lo = std::exp(-2.0 * (half + z0) * (half + z1) / var);
      const double p_any = 1.0 - (1.0 - p_up) * (1.0 - p_lo);
      const double draw = uniform.next();
      if (draw < p_any) {
        Vector y(1);
        // side chosen in proportion to the one-sided crossing probabilities
        y(0) = draw * (p_up + p_lo) < p_any * p_up ? half : -half;
        apply_jump(t1, i + 1, y, pre);
      }
    }
    x = pre;
    path.deviation.col(c + 1) = x;
    path.target.col(c + 1) = xo;
  }
  const auto n = static_cast<Eigen::Index>(s.grid.n_steps);
  path.factor(n) = stepper.factor();
  path.controls.col(n) = scaled_feedback(triplet.U, s.grid.t_end, x, s);
  return path;
}

ControlledPath run_singular(const SingularTriplet& triplet, const TargetModel& model,
                            const EpsilonScaling& scaling, double eps, double horizon,
                            std::uint64_t seed, const SimulationOptions& options) {
  const std::size_t dim = triplet.G.dim();
  const Setup s = prepare(model, dim, scaling, eps, horizon, options);
  ControlledPath path = empty_path(StrategyKind::singular, s, dim, eps, scaling.beta);
  TargetStepper stepper(model, s.grid.dt, seed);
  const double dt = s.grid.dt;

  Vector x = Vector::Zero(static_cast<Eigen::Index>(dim));
  Vector xo = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < s.grid.n_steps; ++i) {
    const double t = s.grid.time(i);
    const double t1 = s.grid.time(i + 1);
    const auto c = static_cast<Eigen::Index>(i);
    path.factor(c) = stepper.factor();
    const Vector u = scaled_feedback(triplet.U, t, x, s);
    path.controls.col(c) = u;
    const Vector& dxo = stepper.step(t);
    xo += dxo;
    Vector pre = x - dxo + u * dt;
    require_finite(pre, t1);
    const Vector z = s.inv_eps_b * pre;

    if (!triplet.G.in_closure(t1, z, 0.0)) {
      Vector target;
      switch (triplet.Gamma.kind()) {
        case DirectionField::Kind::radial: target = triplet.G.radial_projection(t1, z); break;
        case DirectionField::Kind::inward_normal: target = triplet.G.normal_projection(t1, z); break;
        case DirectionField::Kind::custom: {
          const Vector dir = triplet.Gamma(t1, z, triplet.G);
          const double len = triplet.G.ray_entry(t1, z, dir);
          if (!(len > 0.0)) throw InvalidStrategy("direction field is not inward: displacement misses the domain");
          target = z + len * dir;
          break;
        }
      }
      const Vector disp = s.eps_b * (target - z);
      const double dphi = disp.lpNorm<1>();
      if (dphi > 0.0) {
        path.reflections.push_back(ReflectionRecord{t1, i + 1, s.eps_b * target, disp / dphi, dphi});
        pre += disp;
      }
    }
    x = pre;
    path.deviation.col(c + 1) = x;
    path.target.col(c + 1) = xo;
  }
  const auto n = static_cast<Eigen::Index>(s.grid.n_steps);
  path.factor(n) = stepper.factor();
  path.controls.col(n) = scaled_feedback(triplet.U, s.grid.t_end, x, s);
  return path;
}

ControlledPath run_regular(const RegularPolicy& policy, const TargetModel& model,
                           const EpsilonScaling& scaling, double eps, double horizon,
                           std::uint64_t seed, const SimulationOptions& options) {
  const std::size_t dim = policy.U.dim();
  const Setup s = prepare(model, dim, scaling, eps, horizon, options);
  ControlledPath path = empty_path(StrategyKind::regular, s, dim, eps, scaling.beta);
  TargetStepper stepper(model, s.grid.dt, seed);
  const double dt = s.grid.dt;

  Vector x = Vector::Zero(static_cast<Eigen::Index>(dim));
  Vector xo = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < s.grid.n_steps; ++i) {
    const double t = s.grid.time(i);
    const auto c = static_cast<Eigen::Index>(i);
    path.factor(c) = stepper.factor();
    const Vector u = scaled_feedback(policy.U, t, x, s);
    path.controls.col(c) = u;
    const Vector& dxo = stepper.step(t);
    xo += dxo;
    x += -dxo + u * dt;
    require_finite(x, s.grid.time(i + 1));
    path.deviation.col(c + 1) = x;
    path.target.col(c + 1) = xo;
  }
  const auto n = static_cast<Eigen::Index>(s.grid.n_steps);
  path.factor(n) = stepper.factor();
  path.controls.col(n) = scaled_feedback(policy.U, s.grid.t_end, x, s);
  return path;
}

ControlledPath run_strategy(const StrategySpec& strategy, const TargetModel& model,
                            const EpsilonScaling& scaling, double eps, double horizon,
                            std::uint64_t seed, const SimulationOptions& options) {
  return std::visit(
      [&](const auto& st) -> ControlledPath {
        using T = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<T, ImpulseTriplet>) {
          return run_impulse(st, model, scaling, eps, horizon, seed, options);
        } else if constexpr (std::is_same_v<T, SingularTriplet>) {
          return run_singular(st, model, scaling, eps, horizon, seed, options);
        } else {
          return run_regular(st, model, scaling, eps, horizon, seed, options);
        }
      },
      strategy);
}

// ---------------------------------------------------------------------------
// Admissibility

namespace {

std::vector<double> sample_times(double t0, double t1) {
  if (t1 <= t0) return {t0};
  std::vector<double> ts;
  constexpr int kTimes = 5;
  for (int i = 0; i < kTimes; ++i) ts.push_back(t0 + (t1 - t0) * i / (kTimes - 1));
  return ts;
}

}  // namespace

AdmissibilityReport check_admissibility_impulse(const ImpulseTriplet& triplet, std::size_t n_samples,
                                                double t0, double t1) {
  AdmissibilityReport rep;
  rep.worst = std::numeric_limits<double>::infinity();
  bool landing_ok = true;
  for (double t : sample_times(t0, t1)) {
    for (const Vector& x : triplet.G.sample_boundary(t, n_samples)) {
      const Vector after = x + triplet.xi(t, x);
      rep.worst = std::min(rep.worst, triplet.V.value(x) - triplet.V.value(after));
      if (!triplet.G.contains(t, after)) landing_ok = false;
    }
  }
  rep.pass = rep.worst > 0.0 && landing_ok;
  std::ostringstream os;
  os << "min boundary decrement V(x) - V(x + xi(x)) = " << rep.worst;
  if (!landing_ok) os << "; some jumps land outside the open domain";
  rep.detail = os.str();
  return rep;
}

AdmissibilityReport check_admissibility_singular(const SingularTriplet& triplet,
                                                 std::size_t n_samples, double t0, double t1) {
  AdmissibilityReport rep;
  rep.worst = -std::numeric_limits<double>::infinity();
  for (double t : sample_times(t0, t1)) {
    for (const Vector& x : triplet.G.sample_boundary(t, n_samples)) {
      const Vector gamma = triplet.Gamma(t, x, triplet.G);
      rep.worst = std::max(rep.worst, triplet.V.gradient(x).dot(gamma));
    }
  }
  rep.pass = rep.worst < 0.0;
  std::ostringstream os;
  os << "max <grad V(x), gamma> over boundary samples = " << rep.worst;
  rep.detail = os.str();
  return rep;
}

AdmissibilityReport check_lyapunov_regular(const RegularPolicy& policy, const Matrix& a,
                                           std::size_t n_samples, double radius, double t) {
  const auto d = static_cast<Eigen::Index>(policy.U.dim());
  if (a.rows() != d || a.cols() != d) throw std::invalid_argument("diffusion dimension mismatch");
  std::vector<Vector> xs;
  xs.push_back(Vector::Zero(d));
  if (d == 1) {
    for (std::size_t i = 0; i < n_samples; ++i) {
      const double frac = n_samples == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(n_samples - 1);
      xs.push_back(Vector::Constant(1, -radius + 2.0 * radius * frac));
    }
  } else {
    GaussianStream g(derive_seed(0x1A9, n_samples));
    UniformStream u(derive_seed(0x1AA, n_samples));
    for (std::size_t i = 0; i < n_samples; ++i) {
      Vector dir(d);
      for (Eigen::Index k = 0; k < d; ++k) dir(k) = g.next();
      const double rr = radius * std::pow(u.next(), 1.0 / static_cast<double>(d));
      xs.push_back(rr * dir / dir.norm());
    }
  }
  const double second_order = 0.5 * (a.cwiseProduct(policy.V.hessian())).sum();
  AdmissibilityReport rep;
  rep.worst = -std::numeric_limits<double>::infinity();
  double scale = 1.0;
  for (const Vector& x : xs) {
    const double vx = policy.V.value(x);
    const double drift = policy.U(t, x).dot(policy.V.gradient(x));
    const double val = second_order + drift - policy.theta + 2.0 * policy.Theta * vx;
    rep.worst = std::max(rep.worst, val);
    scale = std::max({scale, std::abs(second_order), std::abs(drift), 2.0 * policy.Theta * vx});
  }
  rep.pass = rep.worst <= 1e-12 * scale;
  std::ostringstream os;
  os << "max of A V - theta + 2 Theta V over " << xs.size() << " points = " << rep.worst;
  rep.detail = os.str();
  return rep;
}

std::vector<JumpRate> jump_count_diagnostic(std::span<const ControlledPath> paths) {
  std::vector<JumpRate> rates;
  std::vector<double> sum_sq;
  for (const auto& p : paths) {
    const double horizon = p.grid.length();
    if (!(horizon > 0.0)) throw std::invalid_argument("path has zero horizon");
    const double rate = static_cast<double>(p.jumps.size()) * std::pow(p.eps, 2.0 * p.beta) / horizon;
    auto it = std::find_if(rates.begin(), rates.end(), [&](const JumpRate& r) { return r.eps == p.eps; });
    if (it == rates.end()) {
      rates.push_back(JumpRate{p.eps, 0.0, 0.0, 0});
      sum_sq.push_back(0.0);
      it = rates.end() - 1;
    }
    const auto idx = static_cast<std::size_t>(it - rates.begin());
    it->mean += rate;
    sum_sq[idx] += rate * rate;
    ++it->paths;
  }
  for (std::size_t i = 0; i < rates.size(); ++i) {
    auto& r = rates[i];
    const double n = static_cast<double>(r.paths);
    const double mean = r.mean / n;
    const double var = n > 1 ? std::max(sum_sq[i] / n - mean * mean, 0.0) * n / (n - 1) : 0.0;
    r.mean = mean;
    r.std_error = std::sqrt(var / n);
  }
  return rates;
}

}  // namespace ergotrack
