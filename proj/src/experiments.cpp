#include "ergotrack/experiments.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ergotrack/closed_form.hpp"
#include "ergotrack/errors.hpp"

namespace ergotrack {

namespace {

using K = HomogeneousFunction::Kind;

// Fixed cost per jump when F is constant on nonzero jumps.
std::optional<double> constant_fixed_cost(const CostSpec& cost, std::size_t dim) {
  if (cost.F.kind() == K::indicator) return cost.F.parameters()(0, 0);
  if (cost.F.kind() == K::counting && dim == 1) return cost.F.parameters()(0, 0);
  return std::nullopt;
}

bool quadratic_spd(const HomogeneousFunction& f) {
  return f.kind() == K::quadratic && is_spd(f.parameters());
}

CostSpec unit_weights(const CostSpec& c) {
  CostSpec u = c;
  u.r = u.l = u.k = u.h = TimeWeight::constant(1.0);
  return u;
}

bool domain_moves(const Scenario& sc) {
  return sc.strategy.kind != StrategyKind::regular && sc.strategy.domain == DomainType::optimal_impulse &&
         (sc.target.diffusion_ramp != 0.0 || sc.cost.r.slope != 0.0 || sc.cost.k.slope != 0.0);
}

bool has_feedback(const Scenario& sc) {
  return sc.strategy.optimal_lq || (sc.strategy.feedback.size() > 0 && !sc.strategy.feedback.isZero(0.0));
}

// Limits follow from a single reference pair by rescaling space and time,
// unless a boundary strategy also steers with a feedback in a changing
// environment.
bool scaling_applies(const Scenario& sc) {
  if (sc.strategy.kind == StrategyKind::regular || !has_feedback(sc)) return true;
  return sc.target.time_homogeneous() && !domain_moves(sc);
}

// Q^{-1} G for r = l = 1; G does not depend on the diffusion.
Matrix sol_feedback_unit(const Scenario& sc) {
  const auto d = static_cast<Eigen::Index>(sc.dim);
  return solve_lq(Matrix::Identity(d, d), sc.cost.D.parameters(), sc.cost.Q.parameters(), 1.0, 1.0)
      .feedback_matrix;
}

}  // namespace

TargetModel build_target(const Scenario& sc) {
  TargetModel m;
  m.dim = sc.dim;
  const Vector b = sc.target.drift;
  const Vector slope = sc.target.drift_slope;
  m.drift = [b, slope](double t, double) { return Vector(b + slope * t); };
  const TargetConfig tc = sc.target;
  m.diffusion = [tc](double t, double f) { return Matrix(tc.diffusion * tc.scale(t, f)); };
  m.factor = sc.target.factor;
  return m;
}

StrategySpec build_strategy(const Scenario& sc) {
  const StrategyConfig& c = sc.strategy;
  LinearFeedback u = LinearFeedback::zero(sc.dim);
  if (c.optimal_lq) {
    if (!quadratic_spd(sc.cost.D) || !quadratic_spd(sc.cost.Q)) {
      throw ConfigError("optimal_lq feedback needs SPD quadratic D and Q");
    }
    const Matrix unit = sol_feedback_unit(sc);
    const TimeWeight r = sc.cost.r;
    const TimeWeight l = sc.cost.l;
    if (r.slope == 0.0 && l.slope == 0.0) {
      u = LinearFeedback::constant(std::sqrt(r(0.0) / l(0.0)) * unit);
    } else {
      u = LinearFeedback::time_varying(sc.dim, [unit, r, l](double t) {
        return Matrix(std::sqrt(r(t) / l(t)) * unit);
      });
    }
  } else if (c.feedback.size() > 0) {
    u = c.feedback.isZero(0.0) ? LinearFeedback::zero(sc.dim) : LinearFeedback::constant(c.feedback);
  }
  QuadraticPotential v = c.potential.size() > 0 ? QuadraticPotential{c.potential, 0.0}
                                                : QuadraticPotential::squared_norm(sc.dim);
  if (c.kind == StrategyKind::regular) return RegularPolicy{u, v, c.theta, c.Theta};

  EllipsoidDomain g;
  switch (c.domain) {
    case DomainType::interval: g = EllipsoidDomain::interval(c.half_width); break;
    case DomainType::ellipsoid: g = EllipsoidDomain::ellipsoid(c.shape); break;
    case DomainType::optimal_impulse: {
      if (sc.target.factor) throw ConfigError("optimal_impulse domains cannot follow a random factor");
      if (!quadratic_spd(sc.cost.D)) throw ConfigError("optimal_impulse domains need an SPD quadratic D");
      const auto f0 = constant_fixed_cost(sc.cost, sc.dim);
      if (!f0 || !(*f0 > 0.0)) throw ConfigError("optimal_impulse domains need a positive constant fixed cost");
      if (!is_spd(sc.target.diffusion)) throw ConfigError("optimal_impulse domains need an SPD diffusion");
      const Matrix b0 = solve_matrix_B(sc.target.diffusion, sc.cost.D.parameters()).B;
      // {x^T B_t x < 2 sqrt(k F0 / r)} with B_t = B_0 / sqrt(s(t))
      const TargetConfig tc = sc.target;
      const TimeWeight r = sc.cost.r;
      const TimeWeight k = sc.cost.k;
      const double f = *f0;
      const double scale = c.domain_scale;
      g = EllipsoidDomain::dilated(b0 / 2.0, [tc, r, k, f, scale](double t) {
        return scale * std::pow(tc.scale(t, 0.0) * k(t) * f / r(t), 0.25);
      });
      break;
    }
  }
  if (g.dim() != sc.dim) throw ConfigError("domain dimension does not match dim");
  if (c.kind == StrategyKind::impulse) {
    return ImpulseTriplet{u, g, JumpRule::proportional(c.alpha), v};
  }
  const DirectionField dir =
      c.direction == DirectionField::Kind::inward_normal ? DirectionField::inward_normal() : DirectionField::radial();
  return SingularTriplet{u, g, dir, v};
}

EpsilonScaling scenario_scaling(const Scenario& sc) { return derive_exponents(sc.beta, sc.cost); }

std::uint64_t job_seed(const Scenario& sc, std::size_t eps_index, std::size_t rep) {
  return derive_seed(derive_seed(sc.base_seed, eps_index), rep);
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate_scenario(const Scenario& sc) {
  ValidationReport rep;
  auto note = [&](bool ok, const std::string& what) {
    rep.messages.push_back(std::string(ok ? "ok    " : "FAIL  ") + what);
    if (!ok) rep.pass = false;
  };

  try {
    sc.cost.validate(sc.horizon);
    note(true, "cost degrees and weights");
  } catch (const std::exception& e) {
    note(false, std::string("cost: ") + e.what());
  }

  const auto samples = default_homogeneity_samples(sc.dim, 64);
  rep.homogeneity = check_homogeneity(sc.cost, samples);
  {
    std::ostringstream os;
    os << "homogeneity defect " << rep.homogeneity;
    note(rep.homogeneity < 1e-12, os.str());
  }
  for (const auto& [term, degree] : sc.declared_degrees) {
    const HomogeneousFunction& f = term == "D" ? sc.cost.D : term == "Q" ? sc.cost.Q : term == "F" ? sc.cost.F : sc.cost.P;
    CostSpec declared = sc.cost;
    HomogeneousFunction wrapped = HomogeneousFunction::custom(term, degree, [f](const Vector& x) { return f(x); });
    if (term == "D") declared.D = wrapped;
    else if (term == "Q") declared.Q = wrapped;
    else if (term == "F") declared.F = wrapped;
    else declared.P = wrapped;
    const double defect = check_homogeneity(declared, samples);
    std::ostringstream os;
    os << "declared degree " << degree << " of " << term << ": homogeneity defect " << defect;
    note(defect < 1e-12, os.str());
  }

  try {
    (void)scenario_scaling(sc);
    note(true, "exponents");
  } catch (const std::exception& e) {
    note(false, std::string("exponents: ") + e.what());
  }

  const Matrix& a0 = sc.target.diffusion;
  if (!a0.isZero(0.0) && !is_spd(a0)) note(false, "target diffusion must be SPD or zero");

  StrategySpec st;
  try {
    st = build_strategy(sc);
  } catch (const std::exception& e) {
    note(false, std::string("strategy: ") + e.what());
    return rep;
  }

  if (const auto* imp = std::get_if<ImpulseTriplet>(&st)) {
    const AdmissibilityReport r = check_admissibility_impulse(*imp, 64, 0.0, sc.horizon);
    rep.admissibility = r.worst;
    note(r.pass, "impulse admissibility: " + r.detail);
  } else if (const auto* sing = std::get_if<SingularTriplet>(&st)) {
    const AdmissibilityReport r = check_admissibility_singular(*sing, 64, 0.0, sc.horizon);
    rep.admissibility = r.worst;
    note(r.pass, "singular admissibility: " + r.detail);
  } else {
    const auto& reg = std::get<RegularPolicy>(st);
    const double radius = 10.0 * std::sqrt(std::max(a0.trace(), 1e-12));
    rep.admissibility = -std::numeric_limits<double>::infinity();
    bool ok = true;
    std::string detail;
    for (double t : {0.0, sc.horizon}) {
      const AdmissibilityReport r =
          check_lyapunov_regular(reg, a0 * sc.target.scale(t, 0.0), 64, radius, t);
      rep.admissibility = std::max(rep.admissibility, r.worst);
      ok = ok && r.pass;
      if (!r.pass || detail.empty()) detail = r.detail;
    }
    note(ok, "Lyapunov condition: " + detail);
  }

  if (!a0.isZero(0.0)) {
    if (sc.solver.limit_estimator == LimitEstimator::oracle || sc.solver.cross_check) {
      note(sc.dim <= 2, "chain oracle needs dim <= 2");
    }
    if (!scaling_applies(sc) && sc.target.factor) {
      note(false, "limit of a boundary strategy with feedback under a random factor is not supported");
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Limits

namespace {

constexpr std::uint64_t kFactorStream = 0xFAC7;

LimitEstimateOptions estimate_options(const Scenario& sc, LimitEstimator which) {
  LimitEstimateOptions o;
  o.estimator = which;
  o.oracle_h = sc.solver.oracle_h;
  o.simulation.horizon = sc.solver.sim_horizon;
  o.simulation.burn_in = sc.solver.burn_in;
  o.simulation.replications = sc.solver.sim_replications;
  o.simulation.n_sub = sc.solver.n_sub;
  o.simulation.seed = derive_seed(sc.base_seed, 0x5157);
  return o;
}

const char* estimator_name(LimitEstimator e) {
  return e == LimitEstimator::oracle ? "oracle" : "simulation";
}

StrategySpec frozen_strategy(const StrategySpec& st, double t) {
  return std::visit(
      [t](const auto& s) -> StrategySpec {
        using T = std::decay_t<decltype(s)>;
        T out = s;
        out.U = s.U.is_zero() ? LinearFeedback::zero(s.U.dim()) : LinearFeedback::constant(s.U.sigma(t));
        if constexpr (!std::is_same_v<T, RegularPolicy>) out.G = EllipsoidDomain::ellipsoid(s.G.shape(t));
        if constexpr (std::is_same_v<T, ImpulseTriplet>) out.xi = JumpRule::proportional(s.xi.alpha(t));
        return out;
      },
      st);
}

// c at time t and diffusion a0 * s from the reference at t = 0, s = 1,
// computed with unit weights.
LimitCost rescale_limit(const LimitCost& ref, const Scenario& sc, const StrategySpec& st, double t,
                        double s) {
  const CostSpec& cost = sc.cost;
  const double zd = cost.D.degree();
  const double zq = cost.Q.degree();
  LimitCost c;
  if (const auto* reg = std::get_if<RegularPolicy>(&st)) {
    // Gaussian law: covariance scales with s / mu when Sigma_t = mu Sigma_0
    double mu = 1.0;
    if (!reg->U.is_zero() && !reg->U.is_constant()) mu = reg->U.sigma(t).norm() / reg->U.sigma(0.0).norm();
    const double v = s / mu;
    c.deviation = cost.r(t) * ref.deviation * std::pow(v, zd / 2.0);
    c.regular = cost.l(t) * ref.regular * std::pow(mu, zq) * std::pow(v, zq / 2.0);
  } else {
    // x -> lambda x with time sped up by s / lambda^2
    const EllipsoidDomain& g =
        std::holds_alternative<ImpulseTriplet>(st) ? std::get<ImpulseTriplet>(st).G : std::get<SingularTriplet>(st).G;
    const double lam = g.scale(t) / g.scale(0.0);
    c.deviation = cost.r(t) * ref.deviation * std::pow(lam, zd);
    c.regular = cost.l(t) * ref.regular;
    c.fixed = cost.k(t) * ref.fixed * s / (lam * lam);
    c.proportional = cost.h(t) * ref.proportional * s / lam;
  }
  c.value = c.deviation + c.regular + c.fixed + c.proportional;
  c.std_error = ref.value > 0.0 ? ref.std_error * c.value / ref.value : 0.0;
  return c;
}

struct Node {
  double t;
  double s;
  double w;
};

std::vector<Node> deterministic_nodes(const Scenario& sc) {
  const std::size_t n = sc.solver.time_points;
  std::vector<Node> nodes;
  const double step = sc.horizon / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = step * static_cast<double>(i);
    nodes.push_back({t, sc.target.scale(t, 0.0), (i == 0 || i + 1 == n ? 0.5 : 1.0) * step});
  }
  return nodes;
}

std::vector<Node> path_nodes(const Scenario& sc, const TimeGrid& grid, const Vector& factor) {
  std::vector<Node> nodes;
  const std::size_t n = grid.n_steps;
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = grid.time(i);
    nodes.push_back({t, sc.target.scale(t, factor(static_cast<Eigen::Index>(i))),
                     (i == 0 || i == n ? 0.5 : 1.0) * grid.dt});
  }
  return nodes;
}

template <class Fn>
LimitCost integrate_nodes(const std::vector<Node>& nodes, Fn&& fn) {
  LimitCost acc;
  for (const Node& nd : nodes) {
    const LimitCost c = fn(nd.t, nd.s);
    acc.value += nd.w * c.value;
    acc.deviation += nd.w * c.deviation;
    acc.regular += nd.w * c.regular;
    acc.fixed += nd.w * c.fixed;
    acc.proportional += nd.w * c.proportional;
    acc.std_error += nd.w * c.std_error;
  }
  return acc;
}

// Closed-form lower bound I(t) as a function of (t, s), when one exists.
std::optional<std::function<double(double, double)>> lower_bound_fn(const Scenario& sc, const StrategySpec& st) {
  const Matrix& a0 = sc.target.diffusion;
  const CostSpec cost = sc.cost;
  if (const auto* imp = std::get_if<ImpulseTriplet>(&st)) {
    const auto f0 = constant_fixed_cost(cost, sc.dim);
    if (!imp->U.is_zero() || !quadratic_spd(cost.D) || !f0 || !cost.P.is_zero()) return std::nullopt;
    if (a0.isZero(0.0)) return [](double, double) { return 0.0; };
    const double tr = solve_matrix_B(a0, cost.D.parameters()).I_value;
    const double f = *f0;
    return [tr, f, cost](double t, double s) { return std::sqrt(s) * tr * std::sqrt(cost.r(t) * cost.k(t) * f); };
  }
  if (std::holds_alternative<RegularPolicy>(st)) {
    if (!quadratic_spd(cost.D) || !quadratic_spd(cost.Q)) return std::nullopt;
    if (a0.isZero(0.0)) return [](double, double) { return 0.0; };
    const Matrix g1 = solve_lq(a0, cost.D.parameters(), cost.Q.parameters(), 1.0, 1.0).G;
    const double tr = (a0 * g1).trace();
    return [tr, cost](double t, double s) { return s * std::sqrt(cost.r(t) * cost.l(t)) * tr; };
  }
  return std::nullopt;
}

double integrate_scalar(const std::vector<Node>& nodes, const std::function<double(double, double)>& fn) {
  double acc = 0.0;
  for (const Node& nd : nodes) acc += nd.w * fn(nd.t, nd.s);
  return acc;
}

// Reference limit at t = 0 with unit weights, cross-checked where possible.
struct Reference {
  StrategySpec strategy;
  LimitCost estimate;
  std::optional<LimitCost> closed_form;
  std::optional<LimitCost> cross_check;
};

Reference reference_limit(const Scenario& sc, const StrategySpec& st) {
  Reference ref;
  ref.strategy = frozen_strategy(st, 0.0);
  const CostSpec unit = unit_weights(sc.cost);
  const Matrix& a0 = sc.target.diffusion;
  ref.estimate = limit_cost(ref.strategy, a0, unit, 0.0, estimate_options(sc, sc.solver.limit_estimator));
  ref.closed_form = analytic_limit_cost(ref.strategy, a0, unit, 0.0);
  if (ref.closed_form) {
    check_estimator_consistency(ref.estimate, *ref.closed_form, 1e-9 * std::abs(ref.closed_form->value) + 1e-12);
  }
  if (sc.solver.cross_check) {
    const LimitEstimator other = sc.solver.limit_estimator == LimitEstimator::oracle ? LimitEstimator::simulation
                                                                                     : LimitEstimator::oracle;
    ref.cross_check = limit_cost(ref.strategy, a0, unit, 0.0, estimate_options(sc, other));
    check_estimator_consistency(ref.estimate, *ref.cross_check, 0.0);
  }
  return ref;
}

LimitCost mean_of(const std::vector<LimitCost>& xs) {
  LimitCost m;
  if (xs.empty()) return m;
  const double n = static_cast<double>(xs.size());
  double ref_err = 0.0;
  for (const auto& x : xs) {
    m.value += x.value / n;
    m.deviation += x.deviation / n;
    m.regular += x.regular / n;
    m.fixed += x.fixed / n;
    m.proportional += x.proportional / n;
    ref_err += x.std_error / n;
  }
  double ss = 0.0;
  for (const auto& x : xs) ss += (x.value - m.value) * (x.value - m.value);
  const double mc = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  m.std_error = std::hypot(mc, ref_err);
  return m;
}

std::vector<Vector> factor_paths(const Scenario& sc, std::size_t steps, std::vector<TimeGrid>& grids) {
  const TargetModel model = build_target(sc);
  std::vector<Vector> out;
  for (std::size_t rep = 0; rep < sc.replications; ++rep) {
    const TimeGrid grid = TimeGrid::with_steps(0.0, sc.horizon, steps);
    out.push_back(simulate_target(model, grid, job_seed(sc, kFactorStream, rep)).factor_values);
    grids.push_back(grid);
  }
  return out;
}

}  // namespace

LimitSummary scenario_limit(const Scenario& sc) {
  const StrategySpec st = build_strategy(sc);
  LimitSummary out;
  out.estimator = estimator_name(sc.solver.limit_estimator);
  const auto bound = lower_bound_fn(sc, st);
  const Matrix& a0 = sc.target.diffusion;

  if (a0.isZero(0.0)) {
    // no noise: the deviation stays at the origin and nothing is ever paid
    out.mode = "degenerate";
    out.closed_form = LimitCost{};
    if (bound) out.lower_bound = 0.0;
    return out;
  }

  if (!scaling_applies(sc)) {
    if (sc.target.factor) throw ConfigError("pointwise limits need a deterministic environment");
    out.mode = "pointwise";
    const auto nodes = deterministic_nodes(sc);
    const auto opts = estimate_options(sc, sc.solver.limit_estimator);
    out.limit = integrate_nodes(nodes, [&](double t, double s) {
      return limit_cost(st, a0 * s, sc.cost, t, opts);
    });
    if (sc.solver.cross_check) {
      const auto other = estimate_options(sc, sc.solver.limit_estimator == LimitEstimator::oracle
                                                  ? LimitEstimator::simulation
                                                  : LimitEstimator::oracle);
      out.cross_check = integrate_nodes(nodes, [&](double t, double s) {
        return limit_cost(st, a0 * s, sc.cost, t, other);
      });
      check_estimator_consistency(out.limit, *out.cross_check, 0.0);
    }
    if (bound) out.lower_bound = integrate_scalar(nodes, *bound);
    return out;
  }

  out.mode = "scaling";
  const Reference ref = reference_limit(sc, st);
  auto integrate_all = [&](const LimitCost& base, const std::vector<std::vector<Node>>& sets) {
    std::vector<LimitCost> per;
    for (const auto& nodes : sets) {
      per.push_back(integrate_nodes(nodes, [&](double t, double s) { return rescale_limit(base, sc, st, t, s); }));
    }
    return sets.size() == 1 ? per.front() : mean_of(per);
  };

  std::vector<std::vector<Node>> sets;
  if (sc.target.factor) {
    std::vector<TimeGrid> grids;
    const auto steps = std::max<std::size_t>(sc.solver.time_points - 1, 1000);
    const auto paths = factor_paths(sc, steps, grids);
    for (std::size_t i = 0; i < paths.size(); ++i) sets.push_back(path_nodes(sc, grids[i], paths[i]));
  } else {
    sets.push_back(deterministic_nodes(sc));
  }
  out.limit = integrate_all(ref.estimate, sets);
  if (ref.closed_form) out.closed_form = integrate_all(*ref.closed_form, sets);
  if (ref.cross_check) out.cross_check = integrate_all(*ref.cross_check, sets);
  if (bound) {
    double acc = 0.0;
    for (const auto& nodes : sets) acc += integrate_scalar(nodes, *bound);
    out.lower_bound = acc / static_cast<double>(sets.size());
  }
  return out;
}

SuboptimalityReport suboptimality_report(const Scenario& sc) {
  const LimitSummary s = scenario_limit(sc);
  if (!s.lower_bound) {
    throw ConfigError("no closed-form lower bound: needs an impulse strategy without feedback, SPD quadratic D, "
                      "constant F and zero P, or a regular policy with SPD quadratic D and Q");
  }
  SuboptimalityReport r;
  const LimitCost& c = s.closed_form ? *s.closed_form : s.limit;
  r.limit = c.value;
  r.limit_error = s.closed_form ? 0.0 : s.limit.std_error;
  r.lower_bound = *s.lower_bound;
  r.ratio = r.lower_bound > 0.0 ? r.limit / r.lower_bound : std::numeric_limits<double>::quiet_NaN();
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

struct JobResult {
  CostBreakdown cost;
  double rate = 0.0;
  double identity = 0.0;
  double limit = 0.0;  // pathwise limit, factor scenarios only
};

template <class Fn>
void run_pool(std::size_t jobs, std::size_t threads, Fn&& work) {
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t j = next++; j < jobs; j = next++) {
      try {
        work(j);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, jobs));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double intervention_rate(const ControlledPath& path, const Scenario& sc) {
  const double eps_b = std::pow(path.eps, sc.beta);
  switch (path.kind) {
    case StrategyKind::impulse:
      return static_cast<double>(path.jumps.size()) * eps_b * eps_b / sc.horizon;
    case StrategyKind::singular:
      return path.total_phi() * eps_b / sc.horizon;
    case StrategyKind::regular: break;
  }
  return 0.0;
}

}  // namespace

ControlledPath simulate_single(const Scenario& sc, double eps, std::size_t rep) {
  std::size_t index = sc.epsilons.size();
  for (std::size_t i = 0; i < sc.epsilons.size(); ++i) {
    if (sc.epsilons[i] == eps) index = i;
  }
  const TargetModel model = build_target(sc);
  SimulationOptions opts;
  opts.n_sub = sc.solver.n_sub;
  opts.bridge_correction = sc.solver.bridge_correction;
  return run_strategy(build_strategy(sc), model, scenario_scaling(sc), eps, sc.horizon, job_seed(sc, index, rep),
                      opts);
}

SweepResult run_sweep(const Scenario& sc, const SweepOptions& options) {
  const StrategySpec st = build_strategy(sc);
  const TargetModel model = build_target(sc);
  const EpsilonScaling scaling = scenario_scaling(sc);
  SimulationOptions sim;
  sim.n_sub = sc.solver.n_sub;
  sim.bridge_correction = sc.solver.bridge_correction;

  SweepResult out;
  out.name = sc.name;
  if (options.compute_limit) {
    out.limit = scenario_limit(sc);
    if (out.limit.lower_bound && *out.limit.lower_bound > 0.0) {
      const LimitCost& c = out.limit.closed_form ? *out.limit.closed_form : out.limit.limit;
      out.suboptimality = c.value / *out.limit.lower_bound;
    }
  }

  // Pathwise limits under a random factor come from the reference pair.
  std::optional<Reference> ref;
  const bool pathwise = options.compute_limit && sc.target.factor && out.limit.mode == "scaling";
  if (pathwise) ref = reference_limit(sc, st);

  const std::size_t n_eps = sc.epsilons.size();
  const std::size_t jobs = n_eps * sc.replications;
  std::vector<JobResult> results(jobs);
  std::size_t threads = options.threads ? options.threads : sc.solver.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

  run_pool(jobs, threads, [&](std::size_t j) {
    const std::size_t ei = j / sc.replications;
    const std::size_t rep = j % sc.replications;
    const double eps = sc.epsilons[ei];
    const ControlledPath path = run_strategy(st, model, scaling, eps, sc.horizon, job_seed(sc, ei, rep), sim);
    JobResult& r = results[j];
    r.cost = renormalize(eval_cost(path, sc.cost, scaling, eps), eps, scaling);
    r.rate = intervention_rate(path, sc);
    r.identity = path_identity_error(path);
    if (pathwise) {
      const LimitCost& base = ref->closed_form ? *ref->closed_form : ref->estimate;
      r.limit = integrate_nodes(path_nodes(sc, path.grid, path.factor), [&](double t, double s) {
                  return rescale_limit(base, sc, st, t, s);
                }).value;
    }
  });

  // ordered reduction over (eps, replication)
  for (std::size_t ei = 0; ei < n_eps; ++ei) {
    SweepRow row;
    row.eps = sc.epsilons[ei];
    row.replications = sc.replications;
    const double n = static_cast<double>(sc.replications);
    for (std::size_t rep = 0; rep < sc.replications; ++rep) {
      const JobResult& r = results[ei * sc.replications + rep];
      row.mean += r.cost.scaled(1.0 / n);
      row.intervention_rate += r.rate / n;
      row.path_identity = std::max(row.path_identity, r.identity);
    }
    if (sc.replications > 1) {
      CostBreakdown ss;
      double rate_ss = 0.0;
      for (std::size_t rep = 0; rep < sc.replications; ++rep) {
        const JobResult& r = results[ei * sc.replications + rep];
        auto sq = [](double x) { return x * x; };
        ss.deviation_term += sq(r.cost.deviation_term - row.mean.deviation_term);
        ss.regular_term += sq(r.cost.regular_term - row.mean.regular_term);
        ss.fixed_term += sq(r.cost.fixed_term - row.mean.fixed_term);
        ss.proportional_term += sq(r.cost.proportional_term - row.mean.proportional_term);
        ss.total += sq(r.cost.total - row.mean.total);
        rate_ss += sq(r.rate - row.intervention_rate);
      }
      auto se = [n](double s) { return std::sqrt(s / (n - 1.0) / n); };
      row.std_error = CostBreakdown{se(ss.deviation_term), se(ss.regular_term), se(ss.fixed_term),
                                    se(ss.proportional_term), se(ss.total)};
      row.intervention_rate_se = se(rate_ss);
    }
    if (pathwise) {
      double mean = 0.0;
      for (std::size_t rep = 0; rep < sc.replications; ++rep) mean += results[ei * sc.replications + rep].limit / n;
      row.limit = mean;
    } else {
      row.limit = out.limit.closed_form ? out.limit.closed_form->value : out.limit.limit.value;
    }
    out.rows.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << "eps,replications,total,total_se,deviation,deviation_se,regular,regular_se,fixed,fixed_se,"
        "proportional,proportional_se,intervention_rate,intervention_rate_se,path_identity,limit\n";
  os << std::setprecision(17);
  for (const auto& row : r.rows) {
    os << row.eps << ',' << row.replications << ',' << row.mean.total << ',' << row.std_error.total << ','
       << row.mean.deviation_term << ',' << row.std_error.deviation_term << ',' << row.mean.regular_term << ','
       << row.std_error.regular_term << ',' << row.mean.fixed_term << ',' << row.std_error.fixed_term << ','
       << row.mean.proportional_term << ',' << row.std_error.proportional_term << ',' << row.intervention_rate
       << ',' << row.intervention_rate_se << ',' << row.path_identity << ',' << row.limit << '\n';
  }
}

namespace {

nlohmann::json limit_json(const LimitCost& c) {
  return {{"value", c.value},       {"std_error", c.std_error}, {"deviation", c.deviation},
          {"regular", c.regular},   {"fixed", c.fixed},         {"proportional", c.proportional}};
}

nlohmann::json summary_json(const LimitSummary& s) {
  nlohmann::json j{{"estimator", s.estimator}, {"mode", s.mode}, {"limit", limit_json(s.limit)}};
  if (s.closed_form) j["closed_form"] = limit_json(*s.closed_form);
  if (s.cross_check) j["cross_check"] = limit_json(*s.cross_check);
  if (s.lower_bound) j["lower_bound"] = *s.lower_bound;
  return j;
}

}  // namespace

std::string limit_summary_json(const LimitSummary& summary) { return summary_json(summary).dump(2); }

void write_sweep_json(std::ostream& os, const SweepResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"eps", row.eps},
                    {"replications", row.replications},
                    {"total", row.mean.total},
                    {"total_se", row.std_error.total},
                    {"deviation", row.mean.deviation_term},
                    {"regular", row.mean.regular_term},
                    {"fixed", row.mean.fixed_term},
                    {"proportional", row.mean.proportional_term},
                    {"intervention_rate", row.intervention_rate},
                    {"path_identity", row.path_identity},
                    {"limit", row.limit}});
  }
  nlohmann::json j{{"name", r.name}, {"rows", rows}, {"limit", summary_json(r.limit)}};
  if (r.suboptimality) j["suboptimality"] = *r.suboptimality;
  os << j.dump(2) << '\n';
}

void write_plot_data(std::ostream& os, const SweepResult& r) {
  os << "# log_eps renormalized_cost std_error\n" << std::setprecision(17);
  for (const auto& row : r.rows) os << std::log(row.eps) << ' ' << row.mean.total << ' ' << row.std_error.total << '\n';
}

}  // namespace ergotrack
