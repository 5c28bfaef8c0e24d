// Acceptance checks. Prints one PASS/FAIL line per criterion; with
// --criterion N only that criterion runs. Exit status is nonzero when any
// selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ergotrack/closed_form.hpp"
#include "ergotrack/experiments.hpp"

using namespace ergotrack;

namespace {

std::filesystem::path config_dir;

Scenario load(const std::string& name) { return load_scenario(config_dir / (name + ".json")); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (detail.tellp() > 0) detail << "; ";
    detail << (ok ? "" : "[x] ") << what;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

bool within(double x, double target, double rel) { return std::abs(x - target) <= rel * std::abs(target); }

// Sweeps shared between criteria.
std::map<std::string, SweepResult> sweeps;
std::map<std::string, double> sweep_seconds;

const SweepResult& sweep(const std::string& name) {
  auto it = sweeps.find(name);
  if (it != sweeps.end()) return it->second;
  const auto t0 = std::chrono::steady_clock::now();
  SweepResult r = run_sweep(load(name));
  sweep_seconds[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sweeps.emplace(name, std::move(r)).first->second;
}

const SweepRow& smallest_eps(const SweepResult& r) {
  return *std::min_element(r.rows.begin(), r.rows.end(),
                           [](const SweepRow& a, const SweepRow& b) { return a.eps < b.eps; });
}

// Occupation of eps^{-beta} X pooled over the first n replications at eps.
OccupationPair pooled_occupation(const Scenario& sc, double eps, std::size_t n, const OccupationGrid& grid) {
  OccupationPair acc;
  for (std::size_t rep = 0; rep < n; ++rep) {
    const auto p = empirical_occupation(simulate_single(sc, eps, rep), sc.solver.burn_in, grid);
    if (rep == 0) {
      acc = p;
    } else {
      acc.interior_mass += p.interior_mass;
      acc.boundary_mass += p.boundary_mass;
    }
  }
  acc.interior_mass /= static_cast<double>(n);
  acc.boundary_mass /= static_cast<double>(n);
  return acc;
}

double half_width(const Scenario& sc) { return sc.strategy.half_width; }

void criterion1(Outcome& o) {
  const double target = std::sqrt(2.0 / 3.0);
  const auto& r = sweep("impulse_1d_optimal");
  const auto& row = smallest_eps(r);
  o.require(within(row.mean.total, target, 0.05),
            "cost at eps=" + fmt(row.eps) + " " + fmt(row.mean.total) + " vs " + fmt(target));
  const auto b = solve_matrix_B(Matrix::Identity(1, 1), Matrix::Identity(1, 1));
  o.require(std::abs(b.B(0, 0) - target) < 1e-12 && b.residual < 1e-10,
            "B " + fmt(b.B(0, 0)) + " residual " + fmt(b.residual));
  o.require(sweep_seconds["impulse_1d_optimal"] < 300.0, "sweep " + fmt(sweep_seconds["impulse_1d_optimal"]) + " s");
}

void criterion2(Outcome& o) {
  const Scenario sc = load("singular_1d");
  const double L = half_width(sc);
  const double target = L * L / 3.0 + 1.0 / (2.0 * L);
  const auto& row = smallest_eps(sweep("singular_1d"));
  o.require(within(row.mean.total, target, 0.05),
            "cost at eps=" + fmt(row.eps) + " " + fmt(row.mean.total) + " vs " + fmt(target));
  const std::size_t bins = 20;
  const auto pair = pooled_occupation(sc, row.eps, 64, OccupationGrid::symmetric(1, L, bins));
  double tv = 0.0;
  for (Eigen::Index i = 0; i < pair.interior_mass.size(); ++i) tv += std::abs(pair.interior_mass(i) - 1.0 / bins);
  tv *= 0.5;
  o.require(tv < 0.05, "TV to uniform " + fmt(tv));
}

void criterion3(Outcome& o) {
  const Scenario sc = load("lq_1d");
  const auto& row = smallest_eps(sweep("lq_1d"));
  o.require(within(row.mean.total, 1.0, 0.05), "cost at eps=" + fmt(row.eps) + " " + fmt(row.mean.total));
  const auto pair = pooled_occupation(sc, row.eps, 64, OccupationGrid::symmetric(1, 5.0, 200));
  const double var = pair.covariance()(0, 0);
  o.require(within(var, 0.5, 0.05), "stationary variance " + fmt(var));
  const Matrix one = Matrix::Identity(1, 1);
  const auto lq = solve_lq(one, one, one, 1.0, 1.0);
  o.require(std::abs(lq.I_value - 1.0) < 1e-12, "Tr(aG) " + fmt(lq.I_value));
  o.require(within(row.mean.total, lq.I_value, 0.05) && !within(row.mean.total, 0.5 * lq.I_value, 0.2),
            "simulation matches Tr(aG), not half of it");
}

void criterion4(Outcome& o) {
  const Matrix a = Matrix::Identity(2, 2);
  Matrix sd = Matrix::Zero(2, 2);
  sd.diagonal() << 1.0, 4.0;
  const auto bound = impulse_lower_bound(a, sd, 1.0, 1.0);
  o.require(bound.solution.residual < 1e-10, "residual " + fmt(bound.solution.residual));
  const Scenario sc = load("impulse_2d_optimal");
  const StrategySpec st = build_strategy(sc);
  const auto& imp = std::get<ImpulseTriplet>(st);
  const OracleProblem prob = oracle_problem_for(st, a, 0.0, sc.solver.oracle_h);
  const auto pair = markov_chain_oracle(prob).pair;
  const auto w = verify_w_identity(bound.solution.B, a, sd, pair);
  o.require(w.defect < 1e-2, "w-identity defect " + fmt(w.defect));
  o.require((imp.G.shape(0.0) - bound.domain_shape).norm() < 1e-12, "strategy uses the optimal domain");
  LimitEstimateOptions opt;
  opt.oracle_h = sc.solver.oracle_h;
  const auto c = limit_cost(st, a, sc.cost, 0.0, opt);
  o.require(within(c.value, bound.I, 0.03), "limit " + fmt(c.value) + " vs bound " + fmt(bound.I));
}

void criterion5(Outcome& o) {
  const Matrix one = Matrix::Identity(1, 1);
  for (const char* name : {"impulse_1d_optimal", "singular_1d", "lq_1d"}) {
    const Scenario sc = load(name);
    const StrategySpec st = build_strategy(sc);
    const OracleProblem base = oracle_problem_for(st, one, 0.0, 0.0);
    const double extent = 2.0 / std::sqrt(base.boundary.domain.shape(0.0)(0, 0));
    const auto tests = polynomial_test_functions(1, 4, extent / 2.0);
    GeneratorSpec gen{one, base.U, 0.0};
    double res[2];
    for (int k = 0; k < 2; ++k) {
      OracleProblem p = base;
      p.h = extent / (400.0 * (k + 1));
      res[k] = separability_residual(markov_chain_oracle(p).pair, gen, p.boundary, tests).max_abs;
    }
    o.require(res[0] < 1e-3 && res[1] < res[0],
              std::string(name) + " residual " + fmt(res[0]) + " -> " + fmt(res[1]));
    OracleProblem p = base;
    p.h = extent / 400.0;
    OracleOptions power;
    power.method = OracleMethod::power;
    const double spread = uniqueness_probe(p, 5, 77, power);
    o.require(spread < 1e-8, std::string(name) + " uniqueness " + fmt(spread));
  }
}

void criterion6(Outcome& o) {
  double worst = 0.0;
  for (std::size_t d : {1, 2, 3}) {
    Matrix m = Matrix::Identity(d, d);
    m(0, 0) = 3.0;
    for (const auto& cost :
         {make_quadratic_cost(m, Matrix::Identity(d, d), Vector::Ones(d), Vector::Constant(d, 0.5)),
          make_quadratic_cost(Matrix::Identity(d, d), m, Vector::LinSpaced(d, 0.5, 2.0), Vector::Ones(d))}) {
      CostSpec c = cost;
      worst = std::max(worst, check_homogeneity(c, default_homogeneity_samples(d, 500, 3 + d)));
      c.F = HomogeneousFunction::indicator(1.5);
      worst = std::max(worst, check_homogeneity(c, default_homogeneity_samples(d, 500, 9 + d)));
    }
  }
  o.require(worst < 1e-12, "homogeneity defect " + fmt(worst));
  const CostSpec c = make_quadratic_cost(Matrix::Identity(1, 1), Matrix::Identity(1, 1), Vector::Ones(1), Vector::Ones(1));
  double ratio_err = 0.0;
  for (double beta : {0.05, 0.25, 1.0 / 3.0, 0.5, 0.77, 1.0, 2.5}) {
    const auto s = derive_exponents(beta, c);
    const double zd = c.D.degree();
    ratio_err = std::max({ratio_err, std::abs(s.beta_F / (zd + 2.0 - c.F.degree()) - beta) / beta,
                          std::abs(s.beta_P / (zd + 2.0 - c.P.degree()) - beta) / beta,
                          std::abs(s.beta_Q / (zd + c.Q.degree()) - beta) / beta});
  }
  o.require(ratio_err < 1e-14, "exponent ratio error " + fmt(ratio_err));
}

void criterion7(Outcome& o) {
  const Scenario sc = load("impulse_1d_optimal");
  const double L = half_width(sc);
  const double target = 1.0 / (L * L);
  const auto& r = sweep("impulse_1d_optimal");
  double lo = 1e300;
  double hi = 0.0;
  for (const auto& row : r.rows) {
    lo = std::min(lo, row.intervention_rate);
    hi = std::max(hi, row.intervention_rate);
    o.require(within(row.intervention_rate, target, 0.10),
              "rate at eps=" + fmt(row.eps) + " " + fmt(row.intervention_rate) + " vs " + fmt(target));
  }
  o.require(hi / lo - 1.0 < 0.10, "spread across eps " + fmt(hi / lo - 1.0));
}

void criterion8(Outcome& o) {
  const Scenario sc = load("impulse_1d_optimal");
  const double L = half_width(sc);
  const auto& row = smallest_eps(sweep("impulse_1d_optimal"));
  const double dev = L * L / 6.0 * sc.horizon;
  const double fix = 1.0 / (L * L) * sc.horizon;
  o.require(within(row.mean.deviation_term, dev, 0.08),
            "deviation " + fmt(row.mean.deviation_term) + " vs " + fmt(dev));
  o.require(within(row.mean.fixed_term, fix, 0.08), "fixed " + fmt(row.mean.fixed_term) + " vs " + fmt(fix));
}

void criterion9(Outcome& o) {
  const auto doubled = suboptimality_report(load("impulse_1d_doubled"));
  o.require(std::abs(doubled.ratio - 2.25) <= 0.07, "doubled-domain ratio " + fmt(doubled.ratio) + " vs 2.25");
  const auto detuned = suboptimality_report(load("lq_1d_detuned"));
  o.require(std::abs(detuned.ratio - 1.25) <= 0.04, "detuned LQ ratio " + fmt(detuned.ratio) + " vs 1.25");
}

void criterion10(Outcome& o) {
  for (const char* name : {"impulse_1d_optimal", "singular_1d", "lq_1d"}) {
    const Scenario sc = load(name);
    const auto& r = sweep(name);
    for (const auto& row : r.rows) {
      const double dt = std::pow(row.eps, 2.0 * sc.beta) / static_cast<double>(sc.solver.n_sub);
      o.require(row.path_identity < 10.0 * dt,
                std::string(name) + " identity at eps=" + fmt(row.eps) + " " + fmt(row.path_identity));
    }
    std::ostringstream a, b;
    write_sweep_csv(a, r);
    write_sweep_csv(b, run_sweep(sc, SweepOptions{true, 3}));
    o.require(a.str() == b.str(), std::string(name) + " rerun bit-identical");
  }
}

}  // namespace

int main(int argc, char** argv) {
  const char* env = std::getenv("ERGOTRACK_CONFIG_DIR");
  config_dir = env ? env : "configs";
  int only = 0;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--criterion") only = std::atoi(argv[i + 1]);
  }

  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria{
      {"1D impulse optimality", criterion1},
      {"1D singular", criterion2},
      {"1D regular LQ", criterion3},
      {"2D matrix equation and oracle", criterion4},
      {"separability and uniqueness", criterion5},
      {"homogeneity and exponents", criterion6},
      {"jump-count scaling", criterion7},
      {"term-by-term convergence", criterion8},
      {"suboptimality ratios", criterion9},
      {"determinism and path identity", criterion10},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && only != id) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::printf("criterion %2d %s: %s (%s)\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.str().c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
