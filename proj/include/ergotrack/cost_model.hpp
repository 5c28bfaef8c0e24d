#ifndef ERGOTRACK_COST_MODEL_HPP
#define ERGOTRACK_COST_MODEL_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "ergotrack/controlled_path.hpp"
#include "ergotrack/linalg.hpp"

namespace ergotrack {

/// A nonnegative cost function f with f(c x) = c^degree f(x) for c > 0.
///
/// The built-in kinds carry their parameters so they can be written back to
/// a scenario file; custom functions exist for tests and ad-hoc studies.
class HomogeneousFunction {
 public:
  enum class Kind { quadratic, counting, indicator, weighted_l1, custom };
  using Fn = std::function<double(const Vector&)>;

  /// x^T M x, degree 2.
  static HomogeneousFunction quadratic(const Matrix& m);
  /// sum_i c_i 1{x_i != 0}, degree 0.
  static HomogeneousFunction counting(const Vector& constants);
  /// c 1{x != 0}, degree 0.
  static HomogeneousFunction indicator(double c);
  /// sum_i w_i |x_i|, degree 1.
  static HomogeneousFunction weighted_l1(const Vector& weights);
  static HomogeneousFunction custom(std::string name, double degree, Fn fn);

  double operator()(const Vector& x) const { return fn_(x); }
  double degree() const { return degree_; }
  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  /// Matrix for quadratic, constants/weights (as a column) otherwise; a 1x1
  /// matrix holding c for the indicator.
  const Matrix& parameters() const { return params_; }
  bool is_zero() const;

 private:
  HomogeneousFunction(Kind kind, std::string name, double degree, Matrix params, Fn fn);

  Kind kind_;
  std::string name_;
  double degree_;
  Matrix params_;
  Fn fn_;
};

/// Deterministic positive weight w(t) = level + slope * t.
struct TimeWeight {
  double level = 1.0;
  double slope = 0.0;

  double operator()(double t) const { return level + slope * t; }
  static TimeWeight constant(double c) { return TimeWeight{c, 0.0}; }
};

struct CostSpec {
  HomogeneousFunction D;
  HomogeneousFunction Q;
  HomogeneousFunction F;
  HomogeneousFunction P;
  TimeWeight r;
  TimeWeight l;
  TimeWeight k;
  TimeWeight h;

  /// Degree constraints and positivity of the weights on [0, horizon].
  void validate(double horizon) const;
  std::size_t dim() const;
};

/// Quadratic D and Q, counting F with constants, l1 P with weights, unit
/// weights. The caller overrides fields as needed.
CostSpec make_quadratic_cost(const Matrix& d_matrix, const Matrix& q_matrix,
                             const Vector& fixed_constants, const Vector& proportional_weights);

struct EpsilonScaling {
  double beta = 0.0;
  double beta_Q = 0.0;
  double beta_F = 0.0;
  double beta_P = 0.0;
  double zeta_D = 0.0;

  /// eps^{-zeta_D beta}.
  double renormalization(double eps) const;
};

EpsilonScaling derive_exponents(double beta, const CostSpec& spec);

struct CostBreakdown {
  double deviation_term = 0.0;
  double regular_term = 0.0;
  double fixed_term = 0.0;
  double proportional_term = 0.0;
  double total = 0.0;

  CostBreakdown scaled(double c) const;
  CostBreakdown& operator+=(const CostBreakdown& other);
};

CostBreakdown operator+(CostBreakdown a, const CostBreakdown& b);

/// Cost functional J^eps of a controlled path, with time integrals by
/// left-endpoint quadrature on the path grid. Only steps [first, last) and
/// interventions stored at indices in (first, last] are counted; the
/// defaults cover the whole path.
CostBreakdown eval_cost(const ControlledPath& path, const CostSpec& spec,
                        const EpsilonScaling& scaling, double eps, std::size_t first = 0,
                        std::size_t last = static_cast<std::size_t>(-1));

/// Every term times eps^{-zeta_D beta}.
CostBreakdown renormalize(const CostBreakdown& breakdown, double eps, const EpsilonScaling& scaling);

struct HomogeneitySample {
  double eps;
  Vector x;
};

/// max over samples and {D, Q, F, P} of |f(eps x) - eps^deg f(x)| / (1 + |f(x)|).
double check_homogeneity(const CostSpec& spec, std::span<const HomogeneitySample> samples);

/// Deterministic sample set covering eps in [0.01, 10] and |x| up to 5.
std::vector<HomogeneitySample> default_homogeneity_samples(std::size_t dim, std::size_t n,
                                                           std::uint64_t seed = 7);

}  // namespace ergotrack

#endif  // ERGOTRACK_COST_MODEL_HPP
