#include "ergotrack/closed_form.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ergotrack/errors.hpp"
#include "ergotrack/sde_engine.hpp"

namespace ergotrack {

namespace {

void require_spd(const Matrix& m, const char* what) {
  if (m.rows() == 0 || m.rows() != m.cols() || !is_spd(m)) {
    throw std::invalid_argument(std::string(what) + " must be symmetric positive definite");
  }
}

}  // namespace

MatrixEquationSolution solve_matrix_B(const Matrix& a, const Matrix& sigma_d) {
  require_spd(a, "a");
  if (sigma_d.rows() != a.rows() || sigma_d.cols() != a.cols() || !is_symmetric(sigma_d, 1e-10)) {
    throw std::invalid_argument("SigmaD must be symmetric of the same size as a");
  }
  const Matrix root = sym_sqrt(a);
  const Matrix s = symmetrize(root * sigma_d * root);
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const Vector lambda = es.eigenvalues();
  if (lambda.minCoeff() < -1e-12 * std::max(1.0, lambda.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("SigmaD must be positive semi-definite");
  }
  const Vector lam = lambda.cwiseMax(0.0);

  // t = sum_i m_i(t) with m_i decreasing in t; g(t) = sum m_i(t) - t is
  // decreasing, g(0) >= 0 and g(sum sqrt(lambda_i)) <= 0.
  auto m_of = [&](double t) {
    return Vector(((t * t + 16.0 * lam.array()).sqrt() - t) / 4.0);
  };
  auto g = [&](double t) { return m_of(t).sum() - t; };
  double lo = 0.0;
  double hi = lam.cwiseSqrt().sum();
  if (g(lo) < 0.0 || g(hi) > 0.0) throw NumericalError("trace fixed point not bracketed");
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  const double t = 0.5 * (lo + hi);
  const Matrix& o = es.eigenvectors();
  const Matrix m = symmetrize(o * m_of(t).asDiagonal() * o.transpose());
  const Matrix inv_root = sym_inv_sqrt(a);

  MatrixEquationSolution sol;
  sol.B = symmetrize(inv_root * m * inv_root);
  sol.residual = op_norm(2.0 * m * m + m * m.trace() - 2.0 * s);
  sol.I_value = (a * sol.B).trace();
  sol.optimal_domain_matrix = sol.B / 2.0;
  return sol;
}

ImpulseBound impulse_lower_bound(const Matrix& a, const Matrix& sigma_d, double r, double k) {
  if (!(r > 0.0) || !(k > 0.0)) throw std::invalid_argument("r and k must be positive");
  ImpulseBound out;
  out.solution = solve_matrix_B(a, sigma_d);
  out.I = out.solution.I_value * std::sqrt(r * k);
  out.threshold = 2.0 * std::sqrt(k / r);
  out.domain_shape = out.solution.B / out.threshold;
  out.solution.optimal_domain_matrix = out.domain_shape;
  return out;
}

double w_function(const Matrix& b, const Vector& x) {
  const double s = x.dot(b * x);
  return s < 2.0 ? s - s * s / 4.0 : 1.0;
}

double w_generator(const Matrix& b, const Matrix& a, const Vector& x) {
  const double s = x.dot(b * x);
  if (s >= 2.0) return 0.0;
  const Vector bx = b * x;
  return (a * b).trace() * (1.0 - s / 2.0) - bx.dot(a * bx);
}

WIdentityCheck verify_w_identity(const Matrix& b, const Matrix& a, const Matrix& sigma_d,
                                 const OccupationPair& pair, std::size_t n_samples) {
  const double trace = (a * b).trace();
  WIdentityCheck out;
  const double deviation = pair.integrate([&](const Vector& x) { return x.dot(sigma_d * x); });
  out.defect = std::abs(deviation + pair.total_boundary_mass() - trace);

  const auto d = b.rows();
  UniformStream u(derive_seed(17, static_cast<std::uint64_t>(d)));
  const Matrix inv_root = sym_inv_sqrt(b);
  for (std::size_t i = 0; i < n_samples; ++i) {
    // point with x^T B x = 2 u^2 along a random direction
    Vector z(d);
    for (Eigen::Index k = 0; k < d; ++k) z(k) = 2.0 * u.next() - 1.0;
    if (z.norm() == 0.0) continue;
    const Vector x = inv_root * z.normalized() * std::sqrt(2.0) * u.next() * 0.999;
    const double gen = w_generator(b, a, x);
    out.generator_defect = std::max(out.generator_defect, std::abs(gen + x.dot(sigma_d * x) - trace));

    const double h = 1e-4;
    double fd = 0.0;
    for (Eigen::Index p = 0; p < d; ++p) {
      for (Eigen::Index q = 0; q < d; ++q) {
        Vector ep = Vector::Zero(d);
        Vector eq = Vector::Zero(d);
        ep(p) = h;
        eq(q) = h;
        const double second = (w_function(b, x + ep + eq) - w_function(b, x + ep - eq) -
                               w_function(b, x - ep + eq) + w_function(b, x - ep - eq)) /
                              (4.0 * h * h);
        fd += 0.5 * a(p, q) * second;
      }
    }
    out.hessian_defect = std::max(out.hessian_defect, std::abs(fd - gen));
  }
  return out;
}

Matrix ou_stationary_covariance(const Matrix& sigma_fb, const Matrix& a) {
  if (sigma_fb.rows() != a.rows() || sigma_fb.rows() != sigma_fb.cols()) {
    throw std::invalid_argument("feedback and diffusion sizes differ");
  }
  Eigen::EigenSolver<Matrix> es(sigma_fb);
  if (es.eigenvalues().real().minCoeff() <= 0.0) {
    throw InvalidStrategy("feedback matrix is not stabilizing");
  }
  return symmetrize(solve_lyapunov(sigma_fb, a));
}

LQSolution solve_lq(const Matrix& a, const Matrix& d, const Matrix& q, double r, double l) {
  require_spd(a, "a");
  require_spd(d, "D");
  require_spd(q, "Q");
  if (!(l > 0.0) || !(r >= 0.0)) throw std::invalid_argument("need r >= 0 and l > 0");
  const auto n = d.rows();
  LQSolution out;
  if (r == 0.0) {
    out.G = Matrix::Zero(n, n);
    out.feedback_matrix = Matrix::Zero(n, n);
    out.degenerate = true;
    return out;
  }
  const Matrix q_root = sym_sqrt(q);
  const Matrix q_inv_root = sym_inv_sqrt(q);
  out.G = symmetrize(q_root * sym_sqrt(symmetrize(r * l * q_inv_root * d * q_inv_root)) * q_root);
  const Matrix q_inv = q.inverse();
  out.feedback_matrix = q_inv * out.G / l;
  out.I_value = (a * out.G).trace();
  out.residual = op_norm(out.G * q_inv * out.G - r * l * d);
  out.stationary_covariance = ou_stationary_covariance(out.feedback_matrix, a);
  return out;
}

}  // namespace ergotrack
