#include "ergotrack/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ergotrack/sde_engine.hpp"

namespace ergotrack {

HomogeneousFunction::HomogeneousFunction(Kind kind, std::string name, double degree,
                                         Matrix params, Fn fn)
    : kind_(kind), name_(std::move(name)), degree_(degree), params_(std::move(params)),
      fn_(std::move(fn)) {}

HomogeneousFunction HomogeneousFunction::quadratic(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("quadratic cost needs a square matrix");
  Matrix sym = symmetrize(m);
  return HomogeneousFunction(Kind::quadratic, "quadratic", 2.0, sym,
                             [sym](const Vector& x) { return x.dot(sym * x); });
}

HomogeneousFunction HomogeneousFunction::counting(const Vector& constants) {
  if ((constants.array() < 0.0).any()) throw std::invalid_argument("counting constants must be >= 0");
  return HomogeneousFunction(Kind::counting, "counting", 0.0, constants,
                             [constants](const Vector& x) {
                               double s = 0.0;
                               for (Eigen::Index i = 0; i < x.size(); ++i) {
                                 if (x(i) != 0.0) s += constants(i);
                               }
                               return s;
                             });
}

HomogeneousFunction HomogeneousFunction::indicator(double c) {
  if (!(c >= 0.0)) throw std::invalid_argument("indicator constant must be >= 0");
  return HomogeneousFunction(Kind::indicator, "indicator", 0.0, Matrix::Constant(1, 1, c),
                             [c](const Vector& x) { return x.isZero(0.0) ? 0.0 : c; });
}

HomogeneousFunction HomogeneousFunction::weighted_l1(const Vector& weights) {
  if ((weights.array() < 0.0).any()) throw std::invalid_argument("l1 weights must be >= 0");
  return HomogeneousFunction(Kind::weighted_l1, "weighted_l1", 1.0, weights,
                             [weights](const Vector& x) { return weights.dot(x.cwiseAbs()); });
}

HomogeneousFunction HomogeneousFunction::custom(std::string name, double degree, Fn fn) {
  return HomogeneousFunction(Kind::custom, std::move(name), degree, Matrix(), std::move(fn));
}

bool HomogeneousFunction::is_zero() const {
  return kind_ != Kind::custom && params_.size() > 0 && params_.isZero(0.0);
}

std::size_t CostSpec::dim() const {
  return D.kind() == HomogeneousFunction::Kind::quadratic
             ? static_cast<std::size_t>(D.parameters().rows())
             : 0;
}

void CostSpec::validate(double horizon) const {
  if (!(D.degree() > 0.0)) throw std::invalid_argument("deviation cost D must have degree > 0");
  if (!(Q.degree() > 1.0)) throw std::invalid_argument("regular cost Q must have degree > 1");
  if (F.degree() != 0.0) throw std::invalid_argument("fixed cost F must have degree 0");
  if (P.degree() != 1.0) throw std::invalid_argument("proportional cost P must have degree 1");
  auto positive = [horizon](const TimeWeight& w, const char* name) {
    if (!(w(0.0) > 0.0) || !(w(horizon) > 0.0)) {
      throw std::invalid_argument(std::string("weight ") + name + " must stay positive on [0,T]");
    }
  };
  positive(r, "r");
  positive(l, "l");
  positive(k, "k");
  positive(h, "h");
}

CostSpec make_quadratic_cost(const Matrix& d_matrix, const Matrix& q_matrix,
                             const Vector& fixed_constants, const Vector& proportional_weights) {
  return CostSpec{HomogeneousFunction::quadratic(d_matrix),
                  HomogeneousFunction::quadratic(q_matrix),
                  HomogeneousFunction::counting(fixed_constants),
                  HomogeneousFunction::weighted_l1(proportional_weights),
                  TimeWeight::constant(1.0),
                  TimeWeight::constant(1.0),
                  TimeWeight::constant(1.0),
                  TimeWeight::constant(1.0)};
}

double EpsilonScaling::renormalization(double eps) const {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  return std::pow(eps, -zeta_D * beta);
}

EpsilonScaling derive_exponents(double beta, const CostSpec& spec) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  EpsilonScaling s;
  s.beta = beta;
  s.zeta_D = spec.D.degree();
  s.beta_Q = beta * (spec.D.degree() + spec.Q.degree());
  s.beta_F = beta * (spec.D.degree() + 2.0 - spec.F.degree());
  s.beta_P = beta * (spec.D.degree() + 2.0 - spec.P.degree());
  return s;
}

CostBreakdown CostBreakdown::scaled(double c) const {
  return CostBreakdown{c * deviation_term, c * regular_term, c * fixed_term,
                       c * proportional_term, c * total};
}

CostBreakdown& CostBreakdown::operator+=(const CostBreakdown& o) {
  deviation_term += o.deviation_term;
  regular_term += o.regular_term;
  fixed_term += o.fixed_term;
  proportional_term += o.proportional_term;
  total += o.total;
  return *this;
}

CostBreakdown operator+(CostBreakdown a, const CostBreakdown& b) { return a += b; }

CostBreakdown eval_cost(const ControlledPath& path, const CostSpec& spec,
                        const EpsilonScaling& scaling, double eps, std::size_t first,
                        std::size_t last) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  path.check_consistency();
  last = std::min(last, path.grid.n_steps);
  if (first > last) throw std::invalid_argument("empty cost window");

  const double dt = path.grid.dt;
  double dev = 0.0;
  double reg = 0.0;
  const bool has_regular = !spec.Q.is_zero();
  for (std::size_t i = first; i < last; ++i) {
    const double t = path.grid.time(i);
    const auto c = static_cast<Eigen::Index>(i);
    dev += spec.r(t) * spec.D(path.deviation.col(c)) * dt;
    if (has_regular) reg += spec.l(t) * spec.Q(path.controls.col(c)) * dt;
  }

  const double eps_f = std::pow(eps, scaling.beta_F);
  const double eps_p = std::pow(eps, scaling.beta_P);
  double fixed = 0.0;
  double prop = 0.0;
  for (const auto& j : path.jumps) {
    if (j.step <= first || j.step > last) continue;
    fixed += eps_f * spec.k(j.time) * spec.F(j.jump);
    prop += eps_p * spec.h(j.time) * spec.P(j.jump);
  }
  for (const auto& r : path.reflections) {
    if (r.step <= first || r.step > last) continue;
    prop += eps_p * spec.h(r.time) * spec.P(r.direction) * r.dphi;
  }

  CostBreakdown b;
  b.deviation_term = dev;
  b.regular_term = std::pow(eps, scaling.beta_Q) * reg;
  b.fixed_term = fixed;
  b.proportional_term = prop;
  b.total = b.deviation_term + b.regular_term + b.fixed_term + b.proportional_term;
  return b;
}

CostBreakdown renormalize(const CostBreakdown& breakdown, double eps, const EpsilonScaling& scaling) {
  return breakdown.scaled(scaling.renormalization(eps));
}

double check_homogeneity(const CostSpec& spec, std::span<const HomogeneitySample> samples) {
  double worst = 0.0;
  const HomogeneousFunction* fns[] = {&spec.D, &spec.Q, &spec.F, &spec.P};
  for (const auto& s : samples) {
    if (!(s.eps > 0.0)) throw std::invalid_argument("homogeneity samples need eps > 0");
    const Vector scaled = s.eps * s.x;
    for (const auto* f : fns) {
      const double fx = (*f)(s.x);
      const double err = std::abs((*f)(scaled) - std::pow(s.eps, f->degree()) * fx) / (1.0 + std::abs(fx));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

std::vector<HomogeneitySample> default_homogeneity_samples(std::size_t dim, std::size_t n,
                                                           std::uint64_t seed) {
  GaussianStream g(seed);
  UniformStream u(derive_seed(seed, 3));
  std::vector<HomogeneitySample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(static_cast<Eigen::Index>(dim));
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = 2.0 * g.next();
    // eps log-uniform on [0.01, 10]
    const double eps = std::pow(10.0, -2.0 + 3.0 * u.next());
    out.push_back({eps, x});
  }
  return out;
}

}  // namespace ergotrack
