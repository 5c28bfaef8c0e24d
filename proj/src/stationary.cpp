#include "ergotrack/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Sparse>

#include "ergotrack/errors.hpp"
#include "ergotrack/sde_engine.hpp"

namespace ergotrack {

// ---------------------------------------------------------------------------
// OccupationPair

double OccupationPair::integrate(const std::function<double(const Vector&)>& g) const {
  double s = 0.0;
  for (Eigen::Index i = 0; i < interior_mass.size(); ++i) {
    if (interior_mass(i) != 0.0) s += interior_mass(i) * g(interior_points.col(i));
  }
  return s;
}

Vector OccupationPair::mean() const {
  return interior_points * interior_mass / interior_mass.sum();
}

Matrix OccupationPair::covariance() const {
  const Vector m = mean();
  const Matrix centred = interior_points.colwise() - m;
  return centred * interior_mass.asDiagonal() * centred.transpose() / interior_mass.sum();
}

OccupationPair OccupationPair::transformed(double space, double rate) const {
  OccupationPair out = *this;
  out.interior_points *= space;
  out.boundary_points *= space;
  out.boundary_mass *= rate;
  return out;
}

void write_occupation_csv(std::ostream& os, const OccupationPair& pair) {
  os << "part";
  for (std::size_t k = 0; k < pair.dim; ++k) os << ",x" << k + 1;
  os << ",mass\n" << std::setprecision(17);
  auto rows = [&](const char* part, const Matrix& pts, const Vector& mass) {
    for (Eigen::Index i = 0; i < mass.size(); ++i) {
      os << part;
      for (Eigen::Index k = 0; k < pts.rows(); ++k) os << ',' << pts(k, i);
      os << ',' << mass(i) << '\n';
    }
  };
  rows("interior", pair.interior_points, pair.interior_mass);
  rows("boundary", pair.boundary_points, pair.boundary_mass);
}

// ---------------------------------------------------------------------------
// Empirical occupation

OccupationGrid OccupationGrid::symmetric(std::size_t dim, double half_extent, std::size_t n,
                                         std::size_t boundary_bins) {
  if (!(half_extent > 0.0) || n == 0) throw std::invalid_argument("invalid occupation grid");
  OccupationGrid g;
  const auto d = static_cast<Eigen::Index>(dim);
  g.lower = Vector::Constant(d, -half_extent);
  g.upper = Vector::Constant(d, half_extent);
  g.bins.assign(dim, n);
  g.boundary_bins = dim == 1 ? 2 : boundary_bins;
  return g;
}

namespace {

std::size_t boundary_bin(const Vector& z, std::size_t bins) {
  if (z.size() == 1) return z(0) >= 0.0 ? 1 : 0;
  const double ang = std::atan2(z(1), z(0)) + std::numbers::pi;  // [0, 2 pi]
  auto b = static_cast<std::size_t>(ang / (2.0 * std::numbers::pi) * static_cast<double>(bins));
  return std::min(b, bins - 1);
}

}  // namespace

OccupationPair empirical_occupation(const ControlledPath& path, double burn_in,
                                    const OccupationGrid& grid) {
  path.check_consistency();
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw std::invalid_argument("burn_in must lie in [0, 1)");
  const std::size_t d = path.dim();
  if (grid.dim() != d) throw std::invalid_argument("occupation grid dimension mismatch");
  const std::size_t n = path.grid.n_steps;
  const auto first = static_cast<std::size_t>(std::floor(burn_in * static_cast<double>(n)));
  if (first >= n) throw std::invalid_argument("empty path after burn-in");

  const double inv_scale = std::pow(path.eps, -path.beta);
  const double time_unit = std::pow(path.eps, 2.0 * path.beta);
  const double intrinsic_time = static_cast<double>(n - first) * path.grid.dt / time_unit;

  std::size_t total_bins = 1;
  for (auto b : grid.bins) total_bins *= b;
  Vector mass = Vector::Zero(static_cast<Eigen::Index>(total_bins));
  const Vector width = (grid.upper - grid.lower).array() /
                       Eigen::Map<const Eigen::Matrix<std::size_t, Eigen::Dynamic, 1>>(grid.bins.data(), static_cast<Eigen::Index>(d)).cast<double>().array();
  for (std::size_t i = first; i < n; ++i) {
    const Vector z = path.deviation.col(static_cast<Eigen::Index>(i)) * inv_scale;
    std::size_t idx = 0;
    std::size_t stride = 1;
    for (std::size_t k = 0; k < d; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double pos = std::floor((z(kk) - grid.lower(kk)) / width(kk));
      const auto b = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(grid.bins[k] - 1)));
      idx += b * stride;
      stride *= grid.bins[k];
    }
    mass(static_cast<Eigen::Index>(idx)) += 1.0;
  }
  mass /= static_cast<double>(n - first);

  OccupationPair pair;
  pair.dim = d;
  pair.interior_points.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(total_bins));
  for (std::size_t idx = 0; idx < total_bins; ++idx) {
    std::size_t rem = idx;
    for (std::size_t k = 0; k < d; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const std::size_t b = rem % grid.bins[k];
      rem /= grid.bins[k];
      pair.interior_points(kk, static_cast<Eigen::Index>(idx)) =
          grid.lower(kk) + (static_cast<double>(b) + 0.5) * width(kk);
    }
  }
  pair.interior_mass = mass;

  const std::size_t nb = d == 1 ? 2 : std::max<std::size_t>(grid.boundary_bins, 1);
  Matrix bsum = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(nb));
  Vector bmass = Vector::Zero(static_cast<Eigen::Index>(nb));
  Vector bweight = Vector::Zero(static_cast<Eigen::Index>(nb));
  if (path.kind == StrategyKind::impulse) {
    pair.kind = BoundaryKind::jump;
    for (const auto& j : path.jumps) {
      if (j.step <= first) continue;
      const Vector z = j.pre_jump * inv_scale;
      const auto b = static_cast<Eigen::Index>(boundary_bin(z, nb));
      bsum.col(b) += z;
      bweight(b) += 1.0;
      bmass(b) += 1.0;
    }
  } else if (path.kind == StrategyKind::singular) {
    pair.kind = BoundaryKind::reflection;
    for (const auto& r : path.reflections) {
      if (r.step <= first) continue;
      const Vector z = r.boundary_point * inv_scale;
      const double w = r.dphi * inv_scale;
      const auto b = static_cast<Eigen::Index>(boundary_bin(z, nb));
      bsum.col(b) += w * z;
      bweight(b) += w;
      bmass(b) += w;
    }
  }
  std::vector<Eigen::Index> used;
  for (Eigen::Index b = 0; b < bmass.size(); ++b) {
    if (bweight(b) > 0.0) used.push_back(b);
  }
  pair.boundary_points.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(used.size()));
  pair.boundary_mass.resize(static_cast<Eigen::Index>(used.size()));
  for (std::size_t i = 0; i < used.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    pair.boundary_points.col(c) = bsum.col(used[i]) / bweight(used[i]);
    pair.boundary_mass(c) = bmass(used[i]) / intrinsic_time;
  }
  return pair;
}

// ---------------------------------------------------------------------------
// Test functions

namespace {

struct Cutoff {
  double s1;  // squared radius where the cutoff starts dropping
  double s2;

  // psi(s) with s = |x|^2 and its first two derivatives
  void eval(double s, double& v, double& d1, double& d2) const {
    if (s <= s1) {
      v = 1.0;
      d1 = d2 = 0.0;
      return;
    }
    if (s >= s2) {
      v = d1 = d2 = 0.0;
      return;
    }
    const double w = s2 - s1;
    const double u = (s - s1) / w;
    v = 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
    d1 = -30.0 * u * u * (1.0 - u) * (1.0 - u) / w;
    d2 = -60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / (w * w);
  }
};

void enumerate_exponents(std::size_t dim, int degree, std::vector<int>& cur,
                         std::vector<std::vector<int>>& out) {
  if (cur.size() == dim - 1) {
    cur.push_back(degree);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int p = degree; p >= 0; --p) {
    cur.push_back(p);
    enumerate_exponents(dim, degree - p, cur, out);
    cur.pop_back();
  }
}

double ipow(double x, int p) {
  double r = 1.0;
  for (int i = 0; i < p; ++i) r *= x;
  return r;
}

}  // namespace

TestFunctionSet polynomial_test_functions(std::size_t dim, int max_degree, double inner_radius) {
  if (dim == 0 || max_degree < 1 || !(inner_radius > 0.0)) {
    throw std::invalid_argument("invalid test function set");
  }
  const Cutoff cut{inner_radius * inner_radius, 4.0 * inner_radius * inner_radius};
  TestFunctionSet set;
  for (int deg = 1; deg <= max_degree; ++deg) {
    std::vector<std::vector<int>> exps;
    std::vector<int> cur;
    enumerate_exponents(dim, deg, cur, exps);
    for (const auto& e : exps) {
      std::ostringstream name;
      for (std::size_t k = 0; k < dim; ++k) {
        if (e[k] > 0) name << "x" << k + 1 << "^" << e[k];
      }
      auto mono = [e](const Vector& x) {
        double v = 1.0;
        for (Eigen::Index k = 0; k < x.size(); ++k) v *= ipow(x(k), e[static_cast<std::size_t>(k)]);
        return v;
      };
      auto mono_grad = [e](const Vector& x) {
        Vector g = Vector::Zero(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          const int pi = e[static_cast<std::size_t>(i)];
          if (pi == 0) continue;
          double v = pi * ipow(x(i), pi - 1);
          for (Eigen::Index k = 0; k < x.size(); ++k) {
            if (k != i) v *= ipow(x(k), e[static_cast<std::size_t>(k)]);
          }
          g(i) = v;
        }
        return g;
      };
      auto mono_hess = [e](const Vector& x) {
        const Eigen::Index d = x.size();
        Matrix hm = Matrix::Zero(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
          for (Eigen::Index j = 0; j < d; ++j) {
            std::vector<int> p(e);
            double c = 1.0;
            const auto ui = static_cast<std::size_t>(i);
            const auto uj = static_cast<std::size_t>(j);
            c *= p[ui];
            if (p[ui] == 0) continue;
            --p[ui];
            c *= p[uj];
            if (p[uj] == 0) continue;
            --p[uj];
            double v = c;
            for (Eigen::Index k = 0; k < d; ++k) v *= ipow(x(k), p[static_cast<std::size_t>(k)]);
            hm(i, j) = v;
          }
        }
        return hm;
      };
      TestFunction tf;
      tf.name = name.str();
      tf.value = [mono, cut](const Vector& x) {
        double v, d1, d2;
        cut.eval(x.squaredNorm(), v, d1, d2);
        return v == 0.0 ? 0.0 : mono(x) * v;
      };
      tf.gradient = [mono, mono_grad, cut](const Vector& x) {
        double v, d1, d2;
        cut.eval(x.squaredNorm(), v, d1, d2);
        return Vector(v * mono_grad(x) + mono(x) * 2.0 * d1 * x);
      };
      tf.hessian = [mono, mono_grad, mono_hess, cut](const Vector& x) {
        double v, d1, d2;
        cut.eval(x.squaredNorm(), v, d1, d2);
        const Eigen::Index d = x.size();
        const Vector gc = 2.0 * d1 * x;
        const Matrix hc = 2.0 * d1 * Matrix::Identity(d, d) + 4.0 * d2 * x * x.transpose();
        const Vector gm = mono_grad(x);
        return Matrix(v * mono_hess(x) + gm * gc.transpose() + gc * gm.transpose() + mono(x) * hc);
      };
      set.push_back(std::move(tf));
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Separability residual

SeparabilityResidual separability_residual(const OccupationPair& pair, const GeneratorSpec& gen,
                                           const BoundarySpec& boundary,
                                           const TestFunctionSet& tests) {
  SeparabilityResidual out;
  for (const auto& f : tests) {
    double res = 0.0;
    for (Eigen::Index i = 0; i < pair.interior_mass.size(); ++i) {
      const double m = pair.interior_mass(i);
      if (m == 0.0) continue;
      const Vector x = pair.interior_points.col(i);
      double af = 0.5 * gen.a.cwiseProduct(f.hessian(x)).sum();
      if (!gen.U.is_zero()) af += gen.U(gen.t, x).dot(f.gradient(x));
      res += m * af;
    }
    for (Eigen::Index j = 0; j < pair.boundary_mass.size(); ++j) {
      const double m = pair.boundary_mass(j);
      if (m == 0.0) continue;
      const Vector y = pair.boundary_points.col(j);
      if (boundary.kind == BoundaryKind::jump) {
        res += m * (f.value(y + boundary.jump(boundary.t, y)) - f.value(y));
      } else if (boundary.kind == BoundaryKind::reflection) {
        res += m * boundary.direction(boundary.t, y, boundary.domain).dot(f.gradient(y));
      }
    }
    out.per_function.push_back(res);
    out.max_abs = std::max(out.max_abs, std::abs(res));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Markov chain oracle

MarkovChainOracle::MarkovChainOracle(const OracleProblem& problem) : problem_(problem) {
  const EllipsoidDomain& g = problem_.boundary.domain;
  const std::size_t d = g.dim();
  if (d == 0 || d > 2) throw std::invalid_argument("the chain oracle supports d = 1 and d = 2");
  if (problem_.a.rows() != static_cast<Eigen::Index>(d) || !is_spd(problem_.a)) {
    throw std::invalid_argument("oracle diffusion matrix must be SPD of the domain dimension");
  }
  if (!(problem_.h > 0.0)) throw std::invalid_argument("oracle cell width must be positive");
  if (!problem_.U.is_zero() && problem_.U.dim() != d) {
    throw std::invalid_argument("feedback dimension mismatch");
  }

  shape_ = g.shape(problem_.boundary.t);
  const Matrix inv = shape_.inverse();
  spacing_.resize(static_cast<Eigen::Index>(d));
  half_counts_.resize(d);
  std::size_t lattice = 1;
  for (std::size_t k = 0; k < d; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double extent = std::sqrt(inv(kk, kk));
    if (2.0 * extent / problem_.h < 20.0) {
      throw std::invalid_argument("oracle grid too coarse: fewer than 20 cells across the domain");
    }
    auto n = static_cast<long>(std::ceil(2.0 * extent / problem_.h - 1e-9));
    if (n % 2 == 0) ++n;
    spacing_(kk) = 2.0 * extent / static_cast<double>(n);
    half_counts_[k] = static_cast<int>((n - 1) / 2);
    lattice *= static_cast<std::size_t>(n);
  }

  lattice_to_active_.assign(lattice, -1);
  for (std::size_t idx = 0; idx < lattice; ++idx) {
    std::size_t rem = idx;
    Vector c(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
      const auto n = static_cast<std::size_t>(2 * half_counts_[k] + 1);
      const auto offset = static_cast<long>(rem % n) - half_counts_[k];
      rem /= n;
      c(static_cast<Eigen::Index>(k)) = static_cast<double>(offset) * spacing_(static_cast<Eigen::Index>(k));
    }
    if (c.dot(shape_ * c) < 1.0) {
      lattice_to_active_[idx] = static_cast<long>(centers_.size());
      centers_.push_back(c);
    }
  }
  edges_.resize(centers_.size());
  for (std::size_t i = 0; i < centers_.size(); ++i) add_diffusion_and_drift(i);
}

std::optional<std::size_t> MarkovChainOracle::cell_of(const Vector& x) const {
  std::size_t idx = 0;
  std::size_t stride = 1;
  for (std::size_t k = 0; k < half_counts_.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const long off = std::lround(x(kk) / spacing_(kk));
    if (off < -half_counts_[k] || off > half_counts_[k]) return std::nullopt;
    idx += static_cast<std::size_t>(off + half_counts_[k]) * stride;
    stride *= static_cast<std::size_t>(2 * half_counts_[k] + 1);
  }
  const long a = lattice_to_active_[idx];
  if (a < 0) return std::nullopt;
  return static_cast<std::size_t>(a);
}

std::size_t MarkovChainOracle::nearest_active(const Vector& x) const {
  if (auto c = cell_of(x)) return *c;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    const double dd = (centers_[i] - x).squaredNorm();
    if (dd < best_d) {
      best_d = dd;
      best = i;
    }
  }
  return best;
}

void MarkovChainOracle::add_landing(std::size_t from, const Vector& point, double rate) {
  const std::size_t d = half_counts_.size();
  // multilinear weights over the 2^d surrounding lattice nodes
  std::vector<std::pair<Vector, double>> corners{{Vector::Zero(static_cast<Eigen::Index>(d)), 1.0}};
  for (std::size_t k = 0; k < d; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double u = point(kk) / spacing_(kk);
    const double lo = std::floor(u);
    const double frac = u - lo;
    std::vector<std::pair<Vector, double>> next;
    for (auto& [c, w] : corners) {
      Vector c0 = c;
      c0(kk) = lo * spacing_(kk);
      next.emplace_back(c0, w * (1.0 - frac));
      if (frac > 0.0) {
        Vector c1 = c;
        c1(kk) = (lo + 1.0) * spacing_(kk);
        next.emplace_back(c1, w * frac);
      }
    }
    corners = std::move(next);
  }
  std::vector<std::pair<std::size_t, double>> targets;
  for (const auto& [c, w] : corners) {
    if (w == 0.0) continue;
    auto cell = cell_of(c);
    if (!cell) {
      targets.assign(1, {nearest_active(point), 1.0});
      break;
    }
    targets.emplace_back(*cell, w);
  }
  for (const auto& [cell, w] : targets) {
    if (cell != from) edges_[from].push_back(Edge{cell, rate * w});
  }
}

void MarkovChainOracle::add_exit(std::size_t cell, const Vector& target, double rate) {
  const BoundarySpec& b = problem_.boundary;
  if (b.kind == BoundaryKind::none) return;  // truncation: move suppressed
  if (b.kind == BoundaryKind::jump) {
    const Vector landing = target + b.jump(b.t, target);
    events_.push_back(BoundaryEvent{cell, rate, 1.0, target});
    add_landing(cell, landing, rate);
    return;
  }
  // Reflection: the free move would reach `target` outside; push it back to
  // the boundary along the direction field and snap to the nearest cell.
  Vector q;
  switch (b.direction.kind()) {
    case DirectionField::Kind::radial: q = b.domain.radial_projection(b.t, target); break;
    case DirectionField::Kind::inward_normal: q = b.domain.normal_projection(b.t, target); break;
    case DirectionField::Kind::custom: {
      const Vector dir = b.direction(b.t, target, b.domain);
      const double len = b.domain.ray_entry(b.t, target, dir);
      if (!(len > 0.0)) throw InvalidStrategy("direction field is not inward");
      q = target + len * dir;
      break;
    }
  }
  const std::size_t land = nearest_active(q);
  const double push = (centers_[land] - target).lpNorm<1>();
  events_.push_back(BoundaryEvent{cell, rate, push, q});
  if (land != cell) edges_[cell].push_back(Edge{land, rate});
}

void MarkovChainOracle::add_diffusion_and_drift(std::size_t cell) {
  const Vector& x = centers_[cell];
  const std::size_t d = half_counts_.size();
  const Matrix& a = problem_.a;
  const double t = problem_.boundary.t;
  const Vector u = problem_.U.is_zero() ? Vector::Zero(static_cast<Eigen::Index>(d)) : problem_.U(t, x);
  const BoundaryKind kind = problem_.boundary.kind;
  const double cross = d == 2 ? a(0, 1) : 0.0;

  for (std::size_t k = 0; k < d; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double hk = spacing_(kk);
    double axis = a(kk, kk) / (2.0 * hk * hk);
    if (d == 2) axis -= std::abs(cross) / (2.0 * spacing_(0) * spacing_(1));
    if (axis < 0.0) {
      throw std::invalid_argument("diffusion matrix too far from diagonal for the monotone stencil");
    }
    Vector e = Vector::Zero(static_cast<Eigen::Index>(d));
    e(kk) = hk;
    const Vector xp = x + e;
    const Vector xm = x - e;
    const auto cp = cell_of(xp);
    const auto cm = cell_of(xm);

    if (kind == BoundaryKind::jump && (!cp || !cm)) {
      // Shortley-Weller: shorten the arm to the boundary crossing
      const EllipsoidDomain& g = problem_.boundary.domain;
      const double sp = cp ? hk : hk * g.segment_exit(t, x, xp);
      const double sm = cm ? hk : hk * g.segment_exit(t, x, xm);
      const double coeff = 2.0 * axis * hk * hk;  // effective a_kk
      double rp = coeff / (sp * (sp + sm)) + std::max(u(kk), 0.0) / sp;
      double rm = coeff / (sm * (sp + sm)) + std::max(-u(kk), 0.0) / sm;
      const Vector yp = x + (sp / hk) * e;
      const Vector ym = x - (sm / hk) * e;
      if (cp) edges_[cell].push_back(Edge{*cp, rp});
      else add_exit(cell, yp, rp);
      if (cm) edges_[cell].push_back(Edge{*cm, rm});
      else add_exit(cell, ym, rm);
      continue;
    }

    double rp = axis + u(kk) / (2.0 * hk);
    double rm = axis - u(kk) / (2.0 * hk);
    if (rp < 0.0 || rm < 0.0) {
      rp = axis + std::max(u(kk), 0.0) / hk;
      rm = axis + std::max(-u(kk), 0.0) / hk;
    }
    if (cp) edges_[cell].push_back(Edge{*cp, rp});
    else add_exit(cell, xp, rp);
    if (cm) edges_[cell].push_back(Edge{*cm, rm});
    else add_exit(cell, xm, rm);
  }

  if (d == 2 && cross != 0.0) {
    const double rate = std::abs(cross) / (2.0 * spacing_(0) * spacing_(1));
    const double s2 = cross > 0.0 ? 1.0 : -1.0;
    for (double s1 : {1.0, -1.0}) {
      Vector step(2);
      step << s1 * spacing_(0), s1 * s2 * spacing_(1);
      const Vector y = x + step;
      if (auto c = cell_of(y)) {
        edges_[cell].push_back(Edge{*c, rate});
      } else if (kind == BoundaryKind::jump) {
        const double th = problem_.boundary.domain.segment_exit(t, x, y);
        add_exit(cell, x + th * step, rate);
      } else {
        add_exit(cell, y, rate);
      }
    }
  }
}

Vector MarkovChainOracle::total_rates() const {
  const std::size_t n = centers_.size();
  Vector total(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const auto& e : edges_[i]) s += e.rate;
    if (!(s > 0.0)) throw NumericalError("oracle cell without outgoing transitions");
    total(static_cast<Eigen::Index>(i)) = s;
  }
  return total;
}

Vector MarkovChainOracle::power_iteration(const OracleOptions& options, const Vector& initial,
                                          OracleResult& res) const {
  const std::size_t n = centers_.size();
  const Vector total = total_rates();
  Vector mu;
  if (initial.size() == 0) {
    mu = Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  } else {
    if (initial.size() != static_cast<Eigen::Index>(n) || (initial.array() < 0.0).any() ||
        !(initial.sum() > 0.0)) {
      throw std::invalid_argument("initial distribution must be nonnegative with positive mass");
    }
    mu = initial / initial.sum();
  }

  // Flattened transition probabilities of the embedded chain.
  std::vector<std::size_t> offsets(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + edges_[i].size();
  std::vector<std::size_t> to(offsets[n]);
  std::vector<double> prob(offsets[n]);
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = 1.0 / total(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < edges_[i].size(); ++j) {
      to[offsets[i] + j] = edges_[i][j].to;
      prob[offsets[i] + j] = 0.5 * edges_[i][j].rate * inv;
    }
  }

  constexpr std::size_t kWindow = 64;
  Vector next(static_cast<Eigen::Index>(n));
  std::vector<double> history;
  history.reserve(kWindow + 1);
  double diff_window_start = -1.0;
  double ratio = 0.0;
  std::size_t it = 0;
  bool converged = false;
  for (; it < options.max_iterations; ++it) {
    next = 0.5 * mu;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = mu(static_cast<Eigen::Index>(i));
      if (m == 0.0) continue;
      for (std::size_t j = offsets[i]; j < offsets[i + 1]; ++j) {
        next(static_cast<Eigen::Index>(to[j])) += m * prob[j];
      }
    }
    const double diff = (next - mu).lpNorm<1>();
    mu.swap(next);
    if (diff == 0.0) {
      converged = true;
      ++it;
      break;
    }
    if ((it + 1) % kWindow == 0) {
      if (diff_window_start > 0.0) {
        ratio = std::pow(diff / diff_window_start, 1.0 / static_cast<double>(kWindow));
        if (ratio < 1.0) {
          const double err = diff * ratio / (1.0 - ratio);
          if (err < options.tolerance) {
            converged = true;
            ++it;
            break;
          }
        }
      }
      diff_window_start = diff;
    }
  }
  if (!converged) {
    std::ostringstream os;
    os << "power iteration did not converge in " << options.max_iterations
       << " iterations; spectral gap estimate " << 1.0 - ratio;
    throw ConvergenceError(os.str(), 1.0 - ratio);
  }
  mu /= mu.sum();
  res.iterations = it;
  res.spectral_gap = 1.0 - ratio;
  Vector pi = mu.cwiseQuotient(total);
  return pi / pi.sum();
}

Vector MarkovChainOracle::direct_solve() const {
  // pi^T L = 0 with one balance equation replaced by sum(pi) = 1
  const auto n = static_cast<Eigen::Index>(centers_.size());
  const Vector total = total_rates();
  std::vector<Eigen::Triplet<double>> trip;
  const Eigen::Index pinned = n - 1;
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    if (col != pinned) trip.emplace_back(col, col, -total(col));
    for (const auto& e : edges_[i]) {
      const auto row = static_cast<Eigen::Index>(e.to);
      if (row != pinned) trip.emplace_back(row, col, e.rate);
    }
    trip.emplace_back(pinned, col, 1.0);
  }
  Eigen::SparseMatrix<double> lt(n, n);
  lt.setFromTriplets(trip.begin(), trip.end());
  lt.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(lt);
  if (lu.info() != Eigen::Success) throw NumericalError("sparse factorization of the generator failed");
  Vector rhs = Vector::Zero(n);
  rhs(pinned) = 1.0;
  Vector pi = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !pi.allFinite()) throw NumericalError("generator solve failed");
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

OracleResult MarkovChainOracle::solve(const OracleOptions& options, const Vector& initial) const {
  const std::size_t n = centers_.size();
  OracleMethod method = options.method;
  if (method == OracleMethod::automatic) {
    method = half_counts_.size() == 1 ? OracleMethod::power : OracleMethod::direct;
  }
  OracleResult res;
  res.spacing = spacing_;
  res.stationary = method == OracleMethod::power ? power_iteration(options, initial, res) : direct_solve();

  OccupationPair& pair = res.pair;
  pair.dim = half_counts_.size();
  pair.kind = problem_.boundary.kind;
  pair.interior_points.resize(static_cast<Eigen::Index>(pair.dim), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) pair.interior_points.col(static_cast<Eigen::Index>(i)) = centers_[i];
  pair.interior_mass = res.stationary;

  const std::size_t m = problem_.boundary.kind == BoundaryKind::none ? 0 : events_.size();
  pair.boundary_points.resize(static_cast<Eigen::Index>(pair.dim), static_cast<Eigen::Index>(m));
  pair.boundary_mass.resize(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < m; ++j) {
    const auto& ev = events_[j];
    pair.boundary_points.col(static_cast<Eigen::Index>(j)) = ev.point;
    pair.boundary_mass(static_cast<Eigen::Index>(j)) =
        res.stationary(static_cast<Eigen::Index>(ev.from)) * ev.rate * ev.weight;
  }
  return res;
}

OracleResult markov_chain_oracle(const OracleProblem& problem, const OracleOptions& options) {
  return MarkovChainOracle(problem).solve(options);
}

double uniqueness_probe(const OracleProblem& problem, std::size_t starts, std::uint64_t seed,
                        const OracleOptions& options) {
  const MarkovChainOracle chain(problem);
  std::vector<Vector> laws;
  UniformStream u(seed);
  for (std::size_t s = 0; s < starts; ++s) {
    Vector init(static_cast<Eigen::Index>(chain.size()));
    for (Eigen::Index i = 0; i < init.size(); ++i) {
      const double v = u.next();
      init(i) = v * v * v;  // skewed, far from the uniform start
    }
    laws.push_back(chain.solve(options, init).stationary);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < laws.size(); ++i) {
    for (std::size_t j = i + 1; j < laws.size(); ++j) {
      worst = std::max(worst, (laws[i] - laws[j]).lpNorm<1>());
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Limit costs

LimitCost LimitCost::scaled(double c) const {
  return LimitCost{c * value, std::abs(c) * std_error, c * deviation, c * regular, c * fixed,
                   c * proportional};
}

LimitCost& LimitCost::operator+=(const LimitCost& o) {
  value += o.value;
  std_error = std::sqrt(std_error * std_error + o.std_error * o.std_error);
  deviation += o.deviation;
  regular += o.regular;
  fixed += o.fixed;
  proportional += o.proportional;
  return *this;
}

LimitCost limit_cost_from_pair(const OccupationPair& pair, const StrategySpec& strategy,
                               const CostSpec& cost, double t) {
  LimitCost c;
  const double r = cost.r(t);
  const double l = cost.l(t);
  const double k = cost.k(t);
  const double h = cost.h(t);
  std::visit(
      [&](const auto& st) {
        using T = std::decay_t<decltype(st)>;
        const LinearFeedback& u = st.U;
        c.deviation = r * pair.integrate([&](const Vector& x) { return cost.D(x); });
        if (!u.is_zero()) {
          c.regular = l * pair.integrate([&](const Vector& x) { return cost.Q(u(t, x)); });
        }
        for (Eigen::Index j = 0; j < pair.boundary_mass.size(); ++j) {
          const double m = pair.boundary_mass(j);
          const Vector y = pair.boundary_points.col(j);
          if constexpr (std::is_same_v<T, ImpulseTriplet>) {
            const Vector xi = st.xi(t, y);
            c.fixed += m * k * cost.F(xi);
            c.proportional += m * h * cost.P(xi);
          } else if constexpr (std::is_same_v<T, SingularTriplet>) {
            c.proportional += m * h * cost.P(st.Gamma(t, y, st.G));
          }
        }
      },
      strategy);
  c.value = c.deviation + c.regular + c.fixed + c.proportional;
  return c;
}

namespace {

double bounding_half_extent(const Matrix& shape) {
  const Matrix inv = shape.inverse();
  return std::sqrt(inv.diagonal().maxCoeff());
}

Matrix stationary_covariance_of(const LinearFeedback& u, const Matrix& a, double t) {
  const Matrix sigma = u.sigma(t);
  Eigen::EigenSolver<Matrix> es(sigma);
  if (es.eigenvalues().real().minCoeff() <= 0.0) {
    throw InvalidStrategy("feedback is not stabilizing (eigenvalue with nonpositive real part)");
  }
  return symmetrize(solve_lyapunov(sigma, a));
}

StrategySpec frozen_at(const StrategySpec& strategy, double t) {
  return std::visit(
      [&](const auto& st) -> StrategySpec {
        using T = std::decay_t<decltype(st)>;
        T out = st;
        out.U = st.U.is_zero() ? LinearFeedback::zero(st.U.dim()) : LinearFeedback::constant(st.U.sigma(t));
        if constexpr (std::is_same_v<T, ImpulseTriplet>) {
          out.G = EllipsoidDomain::ellipsoid(st.G.shape(t));
          out.xi = JumpRule::proportional(st.xi.alpha(t));
        } else if constexpr (std::is_same_v<T, SingularTriplet>) {
          out.G = EllipsoidDomain::ellipsoid(st.G.shape(t));
        }
        return out;
      },
      strategy);
}

}  // namespace

OracleProblem oracle_problem_for(const StrategySpec& strategy, const Matrix& a, double t, double h) {
  OracleProblem p;
  p.a = a;
  p.boundary.t = t;
  std::visit(
      [&](const auto& st) {
        using T = std::decay_t<decltype(st)>;
        p.U = st.U;
        if constexpr (std::is_same_v<T, ImpulseTriplet>) {
          p.boundary.kind = BoundaryKind::jump;
          p.boundary.jump = st.xi;
          p.boundary.domain = st.G;
        } else if constexpr (std::is_same_v<T, SingularTriplet>) {
          p.boundary.kind = BoundaryKind::reflection;
          p.boundary.direction = st.Gamma;
          p.boundary.domain = st.G;
        } else {
          const Matrix c = stationary_covariance_of(st.U, a, t);
          p.boundary.kind = BoundaryKind::none;
          p.boundary.domain = EllipsoidDomain::ellipsoid(c.inverse() / 64.0);
        }
      },
      strategy);
  if (h <= 0.0) h = 2.0 * bounding_half_extent(p.boundary.domain.shape(t)) / 200.0;
  p.h = h;
  return p;
}

LimitCost limit_cost(const StrategySpec& strategy, const Matrix& a, const CostSpec& cost, double t,
                     const LimitEstimateOptions& options) {
  if (options.estimator == LimitEstimator::oracle) {
    const OracleProblem fine = oracle_problem_for(strategy, a, t, options.oracle_h);
    OracleProblem coarse = fine;
    coarse.h = 2.0 * fine.h;
    LimitCost c = limit_cost_from_pair(markov_chain_oracle(fine, options.oracle).pair, strategy, cost, t);
    const LimitCost c2 =
        limit_cost_from_pair(markov_chain_oracle(coarse, options.oracle).pair, strategy, cost, t);
    c.std_error = std::abs(c.value - c2.value);
    return c;
  }

  const SimulationEstimatorOptions& so = options.simulation;
  if (so.replications == 0) throw std::invalid_argument("need at least one replication");
  const StrategySpec frozen = frozen_at(strategy, t);
  const std::size_t d = dim_of(frozen);
  const TargetModel model = TargetModel::constant(Vector::Zero(static_cast<Eigen::Index>(d)), a);
  EpsilonScaling unit;
  unit.beta = 1.0;
  unit.zeta_D = cost.D.degree();
  SimulationOptions sim;
  sim.n_sub = so.n_sub;

  double extent;
  if (const auto* reg = std::get_if<RegularPolicy>(&frozen)) {
    extent = 8.0 * std::sqrt(stationary_covariance_of(reg->U, a, 0.0).diagonal().maxCoeff());
  } else {
    const EllipsoidDomain& g = std::holds_alternative<ImpulseTriplet>(frozen)
                                   ? std::get<ImpulseTriplet>(frozen).G
                                   : std::get<SingularTriplet>(frozen).G;
    extent = bounding_half_extent(g.shape(0.0)) * (1.0 + 1e-9);
  }
  const std::size_t bins = d == 1 ? so.bins : std::max<std::size_t>(so.bins / 8, 8);
  const OccupationGrid grid = OccupationGrid::symmetric(d, extent, bins);

  std::vector<LimitCost> reps;
  for (std::size_t r = 0; r < so.replications; ++r) {
    const ControlledPath path = run_strategy(frozen, model, unit, 1.0, so.horizon, derive_seed(so.seed, r), sim);
    reps.push_back(limit_cost_from_pair(empirical_occupation(path, so.burn_in, grid), frozen, cost, 0.0));
  }
  LimitCost mean;
  for (const auto& c : reps) {
    mean.value += c.value;
    mean.deviation += c.deviation;
    mean.regular += c.regular;
    mean.fixed += c.fixed;
    mean.proportional += c.proportional;
  }
  const double n = static_cast<double>(reps.size());
  mean.value /= n;
  mean.deviation /= n;
  mean.regular /= n;
  mean.fixed /= n;
  mean.proportional /= n;
  if (reps.size() > 1) {
    double ss = 0.0;
    for (const auto& c : reps) ss += (c.value - mean.value) * (c.value - mean.value);
    mean.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return mean;
}

std::optional<LimitCost> analytic_limit_cost(const StrategySpec& strategy, const Matrix& a,
                                             const CostSpec& cost, double t) {
  const double r = cost.r(t);
  const double l = cost.l(t);
  const double k = cost.k(t);
  const double h = cost.h(t);
  LimitCost c;
  if (const auto* reg = std::get_if<RegularPolicy>(&strategy)) {
    if (cost.D.kind() != HomogeneousFunction::Kind::quadratic ||
        cost.Q.kind() != HomogeneousFunction::Kind::quadratic) {
      return std::nullopt;
    }
    const Matrix cov = stationary_covariance_of(reg->U, a, t);
    const Matrix sigma = reg->U.sigma(t);
    c.deviation = r * (cost.D.parameters() * cov).trace();
    c.regular = l * (sigma.transpose() * cost.Q.parameters() * sigma * cov).trace();
    c.value = c.deviation + c.regular;
    return c;
  }
  if (a.rows() != 1 || cost.D.kind() != HomogeneousFunction::Kind::quadratic) return std::nullopt;
  const double a11 = a(0, 0);
  const double d11 = cost.D.parameters()(0, 0);
  if (const auto* imp = std::get_if<ImpulseTriplet>(&strategy)) {
    if (!imp->U.is_zero() || imp->xi.alpha(t) != 1.0) return std::nullopt;
    const double half = 1.0 / std::sqrt(imp->G.shape(t)(0, 0));
    // density (L - |y|) / L^2, jump rate a / L^2 split evenly between the ends
    const double rate = a11 / (half * half);
    const Vector up = Vector::Constant(1, half);
    const Vector down = -up;
    c.deviation = r * d11 * half * half / 6.0;
    c.fixed = rate * k * 0.5 * (cost.F(imp->xi(t, up)) + cost.F(imp->xi(t, down)));
    c.proportional = rate * h * 0.5 * (cost.P(imp->xi(t, up)) + cost.P(imp->xi(t, down)));
    c.value = c.deviation + c.fixed + c.proportional;
    return c;
  }
  const auto& sing = std::get<SingularTriplet>(strategy);
  if (!sing.U.is_zero()) return std::nullopt;
  const double half = 1.0 / std::sqrt(sing.G.shape(t)(0, 0));
  // uniform density, local time a / (2L) split evenly between the ends
  const double rate = a11 / (2.0 * half);
  c.deviation = r * d11 * half * half / 3.0;
  c.proportional = rate * h * 0.5 * (cost.P(Vector::Constant(1, -1.0)) + cost.P(Vector::Constant(1, 1.0)));
  c.value = c.deviation + c.proportional;
  return c;
}

void check_estimator_consistency(const LimitCost& x, const LimitCost& y, double grid_bias) {
  const double band = 3.0 * (std::hypot(x.std_error, y.std_error) + grid_bias);
  if (std::abs(x.value - y.value) > band) {
    std::ostringstream os;
    os << "limit-cost estimators disagree: " << x.value << " vs " << y.value << " (band " << band << ")";
    throw ConsistencyAlarm(os.str());
  }
}

double integrate_limit_over_time(const std::function<double(double)>& c, double horizon,
                                 std::size_t n_points) {
  if (horizon < 0.0) throw std::invalid_argument("negative horizon");
  if (horizon == 0.0) return 0.0;
  if (n_points < 2) throw std::invalid_argument("trapezoid rule needs at least two nodes");
  const double step = horizon / static_cast<double>(n_points - 1);
  double s = 0.5 * (c(0.0) + c(horizon));
  for (std::size_t i = 1; i + 1 < n_points; ++i) s += c(step * static_cast<double>(i));
  return s * step;
}

LimitCost integrate_limit_over_time(const std::function<LimitCost(double)>& c, double horizon,
                                    std::size_t n_points) {
  if (horizon < 0.0) throw std::invalid_argument("negative horizon");
  if (horizon == 0.0) return LimitCost{};
  if (n_points < 2) throw std::invalid_argument("trapezoid rule needs at least two nodes");
  const double step = horizon / static_cast<double>(n_points - 1);
  LimitCost acc;
  double err = 0.0;
  for (std::size_t i = 0; i < n_points; ++i) {
    const double w = (i == 0 || i + 1 == n_points ? 0.5 : 1.0) * step;
    const LimitCost ci = c(step * static_cast<double>(i));
    acc.value += w * ci.value;
    acc.deviation += w * ci.deviation;
    acc.regular += w * ci.regular;
    acc.fixed += w * ci.fixed;
    acc.proportional += w * ci.proportional;
    // node errors are systematic (same estimator), so they add linearly
    err += w * ci.std_error;
  }
  acc.std_error = err;
  return acc;
}

}  // namespace ergotrack
