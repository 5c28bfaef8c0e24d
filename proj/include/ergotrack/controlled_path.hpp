#ifndef ERGOTRACK_CONTROLLED_PATH_HPP
#define ERGOTRACK_CONTROLLED_PATH_HPP

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "ergotrack/linalg.hpp"
#include "ergotrack/sde_engine.hpp"

namespace ergotrack {

enum class StrategyKind { impulse, singular, regular };

const char* to_string(StrategyKind kind);

struct JumpRecord {
  double time = 0.0;
  std::size_t step = 0;  ///< grid index at which the post-jump state is stored
  Vector pre_jump;       ///< boundary point the jump rule is evaluated at
  Vector jump;           ///< applied jump xi_j
};

struct ReflectionRecord {
  double time = 0.0;
  std::size_t step = 0;
  Vector boundary_point;
  Vector direction;  ///< unit l1 norm
  double dphi = 0.0;
};

/// Trajectory of the controlled deviation X^eps on the internal grid.
///
/// deviation, target and controls are d x (n+1). controls(:, i) is the
/// regular control applied on [t_i, t_{i+1}); the last column is the
/// feedback at t_n and does not enter any integral.
struct ControlledPath {
  StrategyKind kind = StrategyKind::regular;
  TimeGrid grid;
  double eps = 1.0;
  double beta = 1.0;
  Matrix deviation;
  Matrix target;
  Matrix controls;
  Vector factor;  ///< auxiliary factor at grid points (zeros when absent)
  std::vector<JumpRecord> jumps;
  std::vector<ReflectionRecord> reflections;

  std::size_t dim() const { return static_cast<std::size_t>(deviation.rows()); }
  std::size_t n_steps() const { return grid.n_steps; }
  /// eps^{-beta} X^eps(t_i).
  Vector rescaled(std::size_t i) const;
  double total_phi() const;

  /// Throws std::invalid_argument when array sizes disagree with the grid.
  void check_consistency() const;
};

/// max_i || X_i - (-X°_i + sum_{k<i} u_k dt + sum xi_j + sum gamma dphi) ||_inf
double path_identity_error(const ControlledPath& path);

/// time, x_1..x_d, u_1..u_d, phi, jump (0/1) per grid point.
void write_path_csv(std::ostream& os, const ControlledPath& path);

}  // namespace ergotrack

#endif  // ERGOTRACK_CONTROLLED_PATH_HPP
