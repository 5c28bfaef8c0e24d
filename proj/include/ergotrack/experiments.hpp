#ifndef ERGOTRACK_EXPERIMENTS_HPP
#define ERGOTRACK_EXPERIMENTS_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ergotrack/config.hpp"
#include "ergotrack/controlled_path.hpp"
#include "ergotrack/cost_model.hpp"
#include "ergotrack/stationary.hpp"
#include "ergotrack/strategies.hpp"

namespace ergotrack {

TargetModel build_target(const Scenario& scenario);
StrategySpec build_strategy(const Scenario& scenario);
EpsilonScaling scenario_scaling(const Scenario& scenario);

/// Seed of replication `rep` at epsilon index `eps_index`.
std::uint64_t job_seed(const Scenario& scenario, std::size_t eps_index, std::size_t rep);

struct ValidationReport {
  bool pass = true;
  std::vector<std::string> messages;  ///< one line per check, failures prefixed "FAIL"
  double homogeneity = 0.0;
  double admissibility = 0.0;  ///< worst value of the strategy's admissibility check
};

/// Cost consistency, declared degrees, admissibility of the strategy and
/// support of the limit computation.
ValidationReport validate_scenario(const Scenario& scenario);

/// int_0^T c dt and the lower bound int_0^T I dt where available.
struct LimitSummary {
  LimitCost limit;                       ///< from the configured estimator
  std::optional<LimitCost> closed_form;  ///< exact stationary pair
  std::optional<LimitCost> cross_check;  ///< the other estimator
  std::optional<double> lower_bound;
  std::string estimator;
  std::string mode;  ///< "scaling" or "pointwise"
};

/// Computes the limit cost of the scenario's strategy. Throws
/// ConsistencyAlarm when estimators disagree.
LimitSummary scenario_limit(const Scenario& scenario);

struct SweepRow {
  double eps = 0.0;
  std::size_t replications = 0;
  CostBreakdown mean;      ///< renormalized
  CostBreakdown std_error;
  double intervention_rate = 0.0;  ///< jumps or local time per intrinsic time unit
  double intervention_rate_se = 0.0;
  double path_identity = 0.0;  ///< max over replications
  double limit = 0.0;  ///< int_0^T c dt; mean of pathwise limits under a random factor
};

struct SweepResult {
  std::string name;
  std::vector<SweepRow> rows;
  LimitSummary limit;
  std::optional<double> suboptimality;  ///< limit / lower bound
};

struct SweepOptions {
  bool compute_limit = true;
  std::size_t threads = 0;  ///< overrides the scenario when nonzero
};

SweepResult run_sweep(const Scenario& scenario, const SweepOptions& options = {});

struct SuboptimalityReport {
  double limit = 0.0;
  double limit_error = 0.0;
  double lower_bound = 0.0;
  double ratio = 0.0;
};

/// Throws ConfigError when no closed-form lower bound exists for the
/// scenario's cost and strategy class.
SuboptimalityReport suboptimality_report(const Scenario& scenario);

/// One controlled path at the given epsilon and replication.
ControlledPath simulate_single(const Scenario& scenario, double eps, std::size_t rep);

void write_sweep_csv(std::ostream& os, const SweepResult& result);
void write_sweep_json(std::ostream& os, const SweepResult& result);
/// log(eps) and mean renormalized total cost, whitespace separated.
void write_plot_data(std::ostream& os, const SweepResult& result);
std::string limit_summary_json(const LimitSummary& summary);

}  // namespace ergotrack

#endif  // ERGOTRACK_EXPERIMENTS_HPP
