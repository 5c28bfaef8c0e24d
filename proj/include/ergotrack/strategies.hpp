#ifndef ERGOTRACK_STRATEGIES_HPP
#define ERGOTRACK_STRATEGIES_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ergotrack/controlled_path.hpp"
#include "ergotrack/cost_model.hpp"
#include "ergotrack/linalg.hpp"
#include "ergotrack/sde_engine.hpp"

namespace ergotrack {

/// Moving ellipsoid G_t = {x : x^T A_t x < 1}.
///
/// The common case is a fixed reference shape dilated in time,
/// G_t = scale(t) * G_ref, which is what the limit-cost evaluation exploits.
/// A general SPD-valued A_t can be supplied instead, in which case
/// is_dilation_family() is false.
class EllipsoidDomain {
 public:
  using ScaleFn = std::function<double(double)>;
  using ShapeFn = std::function<Matrix(double)>;

  EllipsoidDomain() = default;

  /// (-half_width, half_width) in d = 1.
  static EllipsoidDomain interval(double half_width);
  static EllipsoidDomain ellipsoid(const Matrix& shape);
  /// scale(t) * {x : x^T ref x < 1}.
  static EllipsoidDomain dilated(const Matrix& ref_shape, ScaleFn scale);
  static EllipsoidDomain general(std::size_t dim, ShapeFn shape);

  std::size_t dim() const { return dim_; }
  Matrix shape(double t) const;
  const Matrix& reference_shape() const { return ref_; }
  double scale(double t) const { return scale_ ? scale_(t) : 1.0; }
  bool is_dilation_family() const { return !general_; }

  /// x^T A_t x; the domain is level < 1.
  double level(double t, const Vector& x) const;
  bool contains(double t, const Vector& x) const { return level(t, x) < 1.0; }
  bool in_closure(double t, const Vector& x, double tol = 1e-12) const {
    return level(t, x) <= 1.0 + tol;
  }

  /// x / sqrt(level): the boundary point on the ray through x.
  Vector radial_projection(double t, const Vector& x) const;
  /// Euclidean nearest boundary point.
  Vector normal_projection(double t, const Vector& x) const;
  /// Fraction theta in [0,1] with from + theta (to - from) on the boundary;
  /// `from` must lie in the closure and `to` outside.
  double segment_exit(double t, const Vector& from, const Vector& to) const;
  /// Smallest s > 0 with from + s dir in the closure, or a negative value
  /// if the ray never enters it.
  double ray_entry(double t, const Vector& from, const Vector& dir) const;

  /// n boundary points (both endpoints in d = 1; equally spaced angles in
  /// d = 2; seeded directions for d >= 3).
  std::vector<Vector> sample_boundary(double t, std::size_t n) const;

 private:
  std::size_t dim_ = 0;
  Matrix ref_;
  ScaleFn scale_;
  ShapeFn general_;
};

/// Proportional jump toward the origin, xi_t(x) = -alpha_t x.
class JumpRule {
 public:
  JumpRule() = default;
  static JumpRule proportional(double alpha);
  static JumpRule time_varying(std::function<double(double)> alpha);

  double alpha(double t) const { return alpha_(t); }
  Vector operator()(double t, const Vector& x) const { return -alpha_(t) * x; }

 private:
  std::function<double(double)> alpha_ = [](double) { return 1.0; };
};

/// Reflection direction on the boundary, normalized to unit l1 norm.
class DirectionField {
 public:
  enum class Kind { radial, inward_normal, custom };
  using Fn = std::function<Vector(double t, const Vector& x, const EllipsoidDomain& g)>;

  DirectionField() = default;
  static DirectionField radial();
  static DirectionField inward_normal();
  /// fn need not be normalized.
  static DirectionField custom(Fn fn);

  Kind kind() const { return kind_; }
  Vector operator()(double t, const Vector& x, const EllipsoidDomain& g) const;

 private:
  Kind kind_ = Kind::radial;
  Fn fn_;
};

/// Linear feedback U_t(x) = -Sigma_t x; Sigma = 0 gives U = 0.
class LinearFeedback {
 public:
  LinearFeedback() = default;
  static LinearFeedback zero(std::size_t dim);
  static LinearFeedback constant(const Matrix& sigma);
  static LinearFeedback time_varying(std::size_t dim, std::function<Matrix(double)> sigma);

  Matrix sigma(double t) const { return sigma_ ? sigma_(t) : constant_; }
  Vector operator()(double t, const Vector& x) const;
  bool is_zero() const { return zero_; }
  bool is_constant() const { return !sigma_; }
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_ = 0;
  bool zero_ = true;
  Matrix constant_;
  std::function<Matrix(double)> sigma_;
};

/// V(x) = x^T M x + offset.
struct QuadraticPotential {
  Matrix m;
  double offset = 0.0;

  static QuadraticPotential squared_norm(std::size_t dim);
  double value(const Vector& x) const { return x.dot(m * x) + offset; }
  Vector gradient(const Vector& x) const { return (m + m.transpose()) * x; }
  Matrix hessian() const { return m + m.transpose(); }
};

struct ImpulseTriplet {
  LinearFeedback U;
  EllipsoidDomain G;
  JumpRule xi;
  QuadraticPotential V;
};

struct SingularTriplet {
  LinearFeedback U;
  EllipsoidDomain G;
  DirectionField Gamma;
  QuadraticPotential V;
};

struct RegularPolicy {
  LinearFeedback U;
  QuadraticPotential V;
  double theta = 1.0;
  double Theta = 1.0;
};

using StrategySpec = std::variant<ImpulseTriplet, SingularTriplet, RegularPolicy>;

StrategyKind kind_of(const StrategySpec& s);
std::size_t dim_of(const StrategySpec& s);

struct SimulationOptions {
  /// Internal steps per intrinsic time unit eps^{2 beta}.
  std::size_t n_sub = 100;
  /// d = 1 impulse only: Brownian-bridge test for crossings between grid points.
  bool bridge_correction = false;
};

/// Impulse strategy: Euler steps of dX = -dX° + u dt inside eps^beta G_t,
/// jump by xi^eps from the boundary point on the last step's segment.
ControlledPath run_impulse(const ImpulseTriplet& triplet, const TargetModel& model,
                           const EpsilonScaling& scaling, double eps, double horizon,
                           std::uint64_t seed, const SimulationOptions& options = {});

/// Singular strategy: Euler step, then push back to the boundary of
/// eps^beta G_t along the direction field (discrete Skorokhod map).
ControlledPath run_singular(const SingularTriplet& triplet, const TargetModel& model,
                            const EpsilonScaling& scaling, double eps, double horizon,
                            std::uint64_t seed, const SimulationOptions& options = {});

/// Regular strategy: u^eps = eps^{-beta} U(eps^{-beta} X^eps).
ControlledPath run_regular(const RegularPolicy& policy, const TargetModel& model,
                           const EpsilonScaling& scaling, double eps, double horizon,
                           std::uint64_t seed, const SimulationOptions& options = {});

ControlledPath run_strategy(const StrategySpec& strategy, const TargetModel& model,
                            const EpsilonScaling& scaling, double eps, double horizon,
                            std::uint64_t seed, const SimulationOptions& options = {});

struct AdmissibilityReport {
  /// impulse: min V(x) - V(x + xi(x)); singular: max <grad V, gamma>;
  /// regular: max of A V - theta + 2 Theta V.
  double worst = 0.0;
  bool pass = false;
  std::string detail;
};

/// Samples the boundary at n_samples points per time at a few times in
/// [t0, t1]; passes iff every decrement is positive and every landing
/// point lies in the open domain.
AdmissibilityReport check_admissibility_impulse(const ImpulseTriplet& triplet, std::size_t n_samples,
                                                double t0 = 0.0, double t1 = 1.0);

AdmissibilityReport check_admissibility_singular(const SingularTriplet& triplet,
                                                 std::size_t n_samples, double t0 = 0.0,
                                                 double t1 = 1.0);

/// Evaluates 1/2 tr(a Hess V) + U . grad V - theta + 2 Theta V at the origin
/// and n_samples points of the ball of given radius.
AdmissibilityReport check_lyapunov_regular(const RegularPolicy& policy, const Matrix& a,
                                           std::size_t n_samples, double radius, double t = 0.0);

struct JumpRate {
  double eps = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t paths = 0;
};

/// N^eps_T eps^{2 beta} / T averaged per distinct eps (order of first appearance).
std::vector<JumpRate> jump_count_diagnostic(std::span<const ControlledPath> paths);

}  // namespace ergotrack

#endif  // ERGOTRACK_STRATEGIES_HPP
