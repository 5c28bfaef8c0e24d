#ifndef ERGOTRACK_STATIONARY_HPP
#define ERGOTRACK_STATIONARY_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ergotrack/controlled_path.hpp"
#include "ergotrack/cost_model.hpp"
#include "ergotrack/linalg.hpp"
#include "ergotrack/strategies.hpp"

namespace ergotrack {

enum class BoundaryKind { none, jump, reflection };

/// Stationary pair on the unit scale: a probability measure on the closed
/// domain and a boundary intensity per unit time (jump rate for impulse,
/// local-time rate in l1 units for reflection). Both are stored as atoms.
struct OccupationPair {
  std::size_t dim = 1;
  BoundaryKind kind = BoundaryKind::none;
  Matrix interior_points;  ///< d x n
  Vector interior_mass;    ///< sums to 1
  Matrix boundary_points;  ///< d x m
  Vector boundary_mass;    ///< per unit time, >= 0

  double total_boundary_mass() const { return boundary_mass.sum(); }
  double interior_total() const { return interior_mass.sum(); }

  /// Integral of g against the interior measure.
  double integrate(const std::function<double(const Vector&)>& g) const;
  Vector mean() const;
  Matrix covariance() const;

  /// Pair of the same strategy after x -> space * x and time -> time / rate:
  /// interior pushed forward, boundary intensity multiplied by `rate`.
  OccupationPair transformed(double space, double rate) const;
};

/// bin center, mass per interior atom then per boundary atom.
void write_occupation_csv(std::ostream& os, const OccupationPair& pair);

/// Histogram geometry for empirical occupation measures.
struct OccupationGrid {
  Vector lower;
  Vector upper;
  std::vector<std::size_t> bins;
  std::size_t boundary_bins = 2;  ///< angular sectors (d >= 2); d = 1 always uses 2

  /// [-half_extent, half_extent]^d with n bins per axis.
  static OccupationGrid symmetric(std::size_t dim, double half_extent, std::size_t n,
                                  std::size_t boundary_bins = 32);
  std::size_t dim() const { return bins.size(); }
};

/// Occupation pair of eps^{-beta} X^eps in intrinsic time s = t / eps^{2 beta}.
/// The first burn_in fraction of the path is discarded.
OccupationPair empirical_occupation(const ControlledPath& path, double burn_in,
                                    const OccupationGrid& grid);

/// Smooth test function with derivatives.
struct TestFunction {
  std::string name;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;
};

using TestFunctionSet = std::vector<TestFunction>;

/// Monomials of total degree 1..max_degree times a C^2 cutoff equal to 1
/// on the ball of radius inner_radius and 0 outside 2 * inner_radius.
TestFunctionSet polynomial_test_functions(std::size_t dim, int max_degree, double inner_radius);

/// Generator A^a_U f = 1/2 sum a_ij d_ij f + U . grad f at time t.
struct GeneratorSpec {
  Matrix a;
  LinearFeedback U;
  double t = 0.0;
};

/// Boundary operator: B_xi f = f(x + xi(x)) - f(x) or B f = gamma . grad f.
struct BoundarySpec {
  BoundaryKind kind = BoundaryKind::none;
  JumpRule jump;
  DirectionField direction;
  EllipsoidDomain domain;
  double t = 0.0;
};

struct SeparabilityResidual {
  double max_abs = 0.0;
  std::vector<double> per_function;
};

SeparabilityResidual separability_residual(const OccupationPair& pair, const GeneratorSpec& gen,
                                           const BoundarySpec& boundary,
                                           const TestFunctionSet& tests);

/// Controlled diffusion frozen at one time, for the chain oracle.
/// With BoundaryKind::none the domain acts as a reflecting truncation box
/// and no boundary mass is recorded.
struct OracleProblem {
  Matrix a;
  LinearFeedback U;
  BoundarySpec boundary;  ///< domain, rule and time
  double h = 0.01;        ///< target cell width
};

/// power: lazy embedded-chain power iteration. direct: sparse LU on the
/// generator (much faster in d = 2). automatic picks power in d = 1.
enum class OracleMethod { automatic, power, direct };

struct OracleOptions {
  double tolerance = 1e-10;  ///< l1 error estimate at which iteration stops
  std::size_t max_iterations = 50'000'000;
  OracleMethod method = OracleMethod::automatic;
};

struct OracleResult {
  OccupationPair pair;
  Vector stationary;  ///< continuous-time stationary law over active cells
  std::size_t iterations = 0;  ///< 0 for the direct solve
  double spectral_gap = 0.0;  ///< 1 - estimated contraction per lazy step (power only)
  Vector spacing;             ///< cell width per axis
};

/// Finite-difference Markov chain approximation of the controlled diffusion.
///
/// Cells are centred on an odd lattice over the domain's bounding box; the
/// active cells are those whose centre lies in the open domain. Diffusion
/// uses the monotone 5/9-point stencil, drift is central where that keeps
/// rates positive and upwind otherwise. Moves leaving the domain are
/// shortened to the boundary (nonuniform stencil) and routed through the
/// jump rule, or suppressed and booked as reflection.
class MarkovChainOracle {
 public:
  explicit MarkovChainOracle(const OracleProblem& problem);

  std::size_t size() const { return centers_.size(); }
  const Vector& spacing() const { return spacing_; }

  /// Stationary law by power iteration on the lazy embedded jump chain.
  /// `initial` is any nonnegative vector with positive mass (uniform if
  /// empty). Throws ConvergenceError when the budget runs out.
  OracleResult solve(const OracleOptions& options = {}, const Vector& initial = Vector()) const;

 private:
  Vector total_rates() const;
  Vector power_iteration(const OracleOptions& options, const Vector& initial, OracleResult& res) const;
  Vector direct_solve() const;

  struct Edge {
    std::size_t to;
    double rate;
  };
  struct BoundaryEvent {
    std::size_t from;
    double rate;    // per unit time from `from`
    double weight;  // 1 for jumps, l1 push length for reflection
    Vector point;
  };

  void add_diffusion_and_drift(std::size_t cell);
  void add_exit(std::size_t cell, const Vector& target, double rate);
  void add_landing(std::size_t from, const Vector& point, double rate);
  std::optional<std::size_t> cell_of(const Vector& x) const;
  std::size_t nearest_active(const Vector& x) const;

  OracleProblem problem_;
  Matrix shape_;
  Vector spacing_;
  std::vector<int> half_counts_;
  std::vector<long> lattice_to_active_;
  std::vector<Vector> centers_;
  std::vector<std::vector<Edge>> edges_;
  std::vector<BoundaryEvent> events_;
};

OracleResult markov_chain_oracle(const OracleProblem& problem, const OracleOptions& options = {});

/// Max pairwise l1 distance between stationary laws reached from `starts`
/// random initial distributions.
double uniqueness_probe(const OracleProblem& problem, std::size_t starts, std::uint64_t seed,
                        const OracleOptions& options = {});

/// Limit cost c(.) and its per-term components.
struct LimitCost {
  double value = 0.0;
  double std_error = 0.0;
  double deviation = 0.0;
  double regular = 0.0;
  double fixed = 0.0;
  double proportional = 0.0;

  LimitCost scaled(double c) const;
  LimitCost& operator+=(const LimitCost& o);
};

/// Integrates the cost densities at time t against a stationary pair.
LimitCost limit_cost_from_pair(const OccupationPair& pair, const StrategySpec& strategy,
                               const CostSpec& cost, double t);

/// Oracle problem for the strategy frozen at time t. Regular policies are
/// truncated to the ellipsoid eight stationary standard deviations wide.
OracleProblem oracle_problem_for(const StrategySpec& strategy, const Matrix& a, double t, double h);

struct SimulationEstimatorOptions {
  double horizon = 1e4;  ///< intrinsic time units per replication
  double burn_in = 0.1;
  std::size_t replications = 8;
  std::size_t n_sub = 100;
  std::uint64_t seed = 1;
  std::size_t bins = 400;  ///< per axis in d = 1; d >= 2 uses bins / 8
};

enum class LimitEstimator { simulation, oracle };

struct LimitEstimateOptions {
  LimitEstimator estimator = LimitEstimator::oracle;
  double oracle_h = 0.0;  ///< 0 picks 1/200 of the domain diameter
  OracleOptions oracle;
  SimulationEstimatorOptions simulation;
};

/// c(a, strategy at t; weights at t) from the chosen estimator. The oracle
/// estimator reports the change under h -> 2h as its error.
LimitCost limit_cost(const StrategySpec& strategy, const Matrix& a, const CostSpec& cost, double t,
                     const LimitEstimateOptions& options);

/// Closed-form c where the stationary pair is known exactly: d = 1 interval
/// impulse (U = 0, jump to centre) and reflection (U = 0), and regular
/// linear feedback with quadratic D and Q in any dimension.
std::optional<LimitCost> analytic_limit_cost(const StrategySpec& strategy, const Matrix& a,
                                             const CostSpec& cost, double t);

/// Throws ConsistencyAlarm if |x - y| > 3 (combined standard error + grid_bias).
void check_estimator_consistency(const LimitCost& x, const LimitCost& y, double grid_bias);

/// Trapezoid rule for int_0^T c(t) dt on n_points equally spaced nodes.
double integrate_limit_over_time(const std::function<double(double)>& c, double horizon,
                                 std::size_t n_points);

LimitCost integrate_limit_over_time(const std::function<LimitCost(double)>& c, double horizon,
                                    std::size_t n_points);

}  // namespace ergotrack

#endif  // ERGOTRACK_STATIONARY_HPP
