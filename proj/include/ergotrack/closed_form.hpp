#ifndef ERGOTRACK_CLOSED_FORM_HPP
#define ERGOTRACK_CLOSED_FORM_HPP

#include <cstddef>

#include "ergotrack/linalg.hpp"
#include "ergotrack/stationary.hpp"

namespace ergotrack {

/// Solution of 2 (a^{1/2} B a^{1/2})^2 + a^{1/2} B a^{1/2} Tr(a^{1/2} B a^{1/2})
///   = 2 a^{1/2} SigmaD a^{1/2}.
struct MatrixEquationSolution {
  Matrix B;
  double residual = 0.0;  ///< operator norm of the equation residual
  double I_value = 0.0;   ///< Tr(a B)
  /// Shape of {x : x^T B x < 2 sqrt(k / r)} for the weights passed to
  /// impulse_lower_bound; for r = k this is B / 2.
  Matrix optimal_domain_matrix;
};

/// Diagonalizes S = a^{1/2} SigmaD a^{1/2}, solves the scalar fixed point
/// for t = Tr M by bisection and maps back. SigmaD may be positive
/// semi-definite (zero gives B = 0).
MatrixEquationSolution solve_matrix_B(const Matrix& a, const Matrix& sigma_d);

struct ImpulseBound {
  MatrixEquationSolution solution;
  double I = 0.0;         ///< Tr(a B) sqrt(r k)
  double threshold = 0.0; ///< 2 sqrt(k / r)
  Matrix domain_shape;    ///< B / threshold
};

ImpulseBound impulse_lower_bound(const Matrix& a, const Matrix& sigma_d, double r, double k);

/// w(x) = x^T B x - (x^T B x)^2 / 4 inside {x^T B x < 2}, 1 outside.
double w_function(const Matrix& b, const Vector& x);
/// 1/2 tr(a Hess w): Tr(aB)(1 - x^T B x / 2) - x^T B a B x inside, 0 outside.
double w_generator(const Matrix& b, const Matrix& a, const Vector& x);

struct WIdentityCheck {
  double defect = 0.0;           ///< |int x^T SigmaD x dpi + nu(dG) - Tr(aB)|
  double generator_defect = 0.0; ///< max over samples of |1/2 tr(a Hess w) + x^T SigmaD x - Tr(aB)|
  double hessian_defect = 0.0;   ///< finite-difference vs closed-form generator of w
};

/// Checks the w-identity for an oracle pair of the domain {x^T B x < 2}
/// with jumps to the origin, and the generator formula at n_samples
/// points inside the domain.
WIdentityCheck verify_w_identity(const Matrix& b, const Matrix& a, const Matrix& sigma_d,
                                 const OccupationPair& pair, std::size_t n_samples = 64);

struct LQSolution {
  Matrix G;
  Matrix feedback_matrix;       ///< Q^{-1} G / l
  double I_value = 0.0;         ///< Tr(a G)
  Matrix stationary_covariance; ///< empty when degenerate
  double residual = 0.0;        ///< || G Q^{-1} G - r l D ||_op
  bool degenerate = false;      ///< r = 0: zero feedback, no stationary law
};

/// LQ ergodic problem with running cost r x^T D x + l u^T Q u.
LQSolution solve_lq(const Matrix& a, const Matrix& d, const Matrix& q, double r, double l);

/// Solves S C + C S^T = a; throws InvalidStrategy unless S is stable.
Matrix ou_stationary_covariance(const Matrix& sigma_fb, const Matrix& a);

}  // namespace ergotrack

#endif  // ERGOTRACK_CLOSED_FORM_HPP
