#ifndef ERGOTRACK_CONFIG_HPP
#define ERGOTRACK_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergotrack/controlled_path.hpp"
#include "ergotrack/cost_model.hpp"
#include "ergotrack/linalg.hpp"
#include "ergotrack/sde_engine.hpp"
#include "ergotrack/stationary.hpp"
#include "ergotrack/strategies.hpp"

namespace ergotrack {

/// Malformed or inconsistent scenario file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Target coefficients b(t) = drift + drift_slope t and
/// a(t, F) = diffusion (1 + diffusion_ramp t) exp(loading F).
struct TargetConfig {
  Vector drift;
  Vector drift_slope;
  Matrix diffusion;
  double diffusion_ramp = 0.0;
  std::optional<FactorSpec> factor;
  double loading = 0.0;

  /// Scalar multiplier of the reference diffusion matrix.
  double scale(double t, double factor_value) const;
  bool time_homogeneous() const { return diffusion_ramp == 0.0 && !factor; }
};

enum class DomainType { interval, ellipsoid, optimal_impulse };

struct StrategyConfig {
  StrategyKind kind = StrategyKind::impulse;
  DomainType domain = DomainType::interval;
  double half_width = 1.0;  ///< interval
  Matrix shape;             ///< ellipsoid
  double domain_scale = 1.0;  ///< optimal_impulse: multiplies the optimal half-widths
  double alpha = 1.0;
  DirectionField::Kind direction = DirectionField::Kind::radial;
  bool optimal_lq = false;
  Matrix feedback;  ///< Sigma for U(x) = -Sigma x; empty means U = 0
  double theta = 1.0;
  double Theta = 1.0;
  Matrix potential;  ///< V(x) = x^T M x; empty means the identity
};

struct SolverConfig {
  std::size_t n_sub = 100;
  bool bridge_correction = false;
  double burn_in = 0.1;
  double oracle_h = 0.0;
  LimitEstimator limit_estimator = LimitEstimator::oracle;
  bool cross_check = false;  ///< also run the other estimator and compare
  std::size_t threads = 0;   ///< 0 uses the hardware concurrency
  std::size_t time_points = 21;
  double sim_horizon = 1e4;
  std::size_t sim_replications = 8;
};

struct Scenario {
  std::string name = "scenario";
  std::size_t dim = 1;
  TargetConfig target;
  CostSpec cost = make_quadratic_cost(Matrix::Identity(1, 1), Matrix::Identity(1, 1),
                                      Vector::Ones(1), Vector::Zero(1));
  /// Degrees asserted in the file for D, Q, F, P; checked against the
  /// functions by validation.
  std::map<std::string, double> declared_degrees;
  double beta = 0.5;
  StrategyConfig strategy;
  double horizon = 1.0;
  std::vector<double> epsilons{0.2, 0.1, 0.05};
  std::size_t replications = 16;
  std::uint64_t base_seed = 1;
  SolverConfig solver;
};

/// Parses a JSON scenario. Structural problems throw ConfigError.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::filesystem::path& path);
std::string scenario_to_json(const Scenario& scenario);

/// "[[1,0],[0,2]]", "[1,2]" or a bare number (1 x 1).
Matrix parse_matrix(const std::string& json_text);

}  // namespace ergotrack

#endif  // ERGOTRACK_CONFIG_HPP
