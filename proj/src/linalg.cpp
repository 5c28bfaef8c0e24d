#include "ergotrack/linalg.hpp"

#include <cmath>
#include <stdexcept>

#include "ergotrack/errors.hpp"

namespace ergotrack {

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

bool is_spd(const Matrix& m) {
  if (m.size() == 0 || !is_symmetric(m, 1e-10)) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix sym_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  Vector ev = es.eigenvalues();
  const double floor = 1e-14 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -floor) throw NumericalError("sym_sqrt: matrix is not positive semi-definite");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Matrix sym_inv_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  Vector ev = es.eigenvalues();
  if (ev.minCoeff() <= 0.0) throw NumericalError("sym_inv_sqrt: matrix is not positive definite");
  ev = ev.cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double op_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

Matrix diffusion_factor(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("diffusion matrix must be square");
  if (a.isZero(0.0)) return Matrix::Zero(a.rows(), a.cols());
  if (!is_symmetric(a, 1e-10)) throw NumericalError("diffusion matrix is not symmetric");
  Eigen::LLT<Matrix> llt(symmetrize(a));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("diffusion matrix is not positive definite (Cholesky failed)");
  }
  return llt.matrixL();
}

Matrix solve_lyapunov(const Matrix& s, const Matrix& rhs) {
  const Eigen::Index d = s.rows();
  if (s.cols() != d || rhs.rows() != d || rhs.cols() != d) {
    throw std::invalid_argument("solve_lyapunov: dimension mismatch");
  }
  // vec(S C + C S^T) = (I kron S + S kron I) vec(C), column-major vec.
  const Eigen::Index n = d * d;
  Matrix k = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index p = 0; p < d; ++p) {
        // (I kron S): block (j, j) = S
        k(j * d + i, j * d + p) += s(i, p);
        // (S kron I): block (j, p) = S(j, p) I
        k(j * d + i, p * d + i) += s(j, p);
      }
    }
  }
  Eigen::Map<const Vector> b(rhs.data(), n);
  Eigen::FullPivLU<Matrix> lu(k);
  if (!lu.isInvertible()) throw NumericalError("Lyapunov operator is singular");
  Vector c = lu.solve(b);
  return Eigen::Map<Matrix>(c.data(), d, d);
}

}  // namespace ergotrack
