#ifndef ERGOTRACK_LINALG_HPP
#define ERGOTRACK_LINALG_HPP

#include <Eigen/Dense>

namespace ergotrack {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

bool is_symmetric(const Matrix& m, double tol = 1e-12);

/// Symmetric with strictly positive eigenvalues.
bool is_spd(const Matrix& m);

Matrix symmetrize(const Matrix& m);

/// Principal square root of a symmetric positive semi-definite matrix.
Matrix sym_sqrt(const Matrix& m);

/// Inverse principal square root of an SPD matrix.
Matrix sym_inv_sqrt(const Matrix& m);

/// Spectral norm (largest singular value).
double op_norm(const Matrix& m);

/// Lower Cholesky factor L with L L^T = a. The zero matrix maps to the zero
/// factor; any other matrix must be SPD or NumericalError is thrown.
Matrix diffusion_factor(const Matrix& a);

/// Solves S C + C S^T = rhs for C (dense Kronecker formulation, small d).
Matrix solve_lyapunov(const Matrix& s, const Matrix& rhs);

}  // namespace ergotrack

#endif  // ERGOTRACK_LINALG_HPP
