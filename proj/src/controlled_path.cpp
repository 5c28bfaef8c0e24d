#include "ergotrack/controlled_path.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace ergotrack {

const char* to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::impulse: return "impulse";
    case StrategyKind::singular: return "singular";
    case StrategyKind::regular: return "regular";
  }
  return "unknown";
}

Vector ControlledPath::rescaled(std::size_t i) const {
  return deviation.col(static_cast<Eigen::Index>(i)) * std::pow(eps, -beta);
}

double ControlledPath::total_phi() const {
  double phi = 0.0;
  for (const auto& r : reflections) phi += r.dphi;
  return phi;
}

void ControlledPath::check_consistency() const {
  const auto cols = static_cast<Eigen::Index>(grid.n_steps + 1);
  if (deviation.cols() != cols || target.cols() != cols || controls.cols() != cols) {
    throw std::invalid_argument("path arrays do not match the time grid");
  }
  if (target.rows() != deviation.rows() || controls.rows() != deviation.rows()) {
    throw std::invalid_argument("path arrays have inconsistent dimension");
  }
  for (const auto& j : jumps) {
    if (j.step > grid.n_steps) throw std::invalid_argument("jump recorded past the grid");
  }
  for (const auto& r : reflections) {
    if (r.step > grid.n_steps) throw std::invalid_argument("reflection recorded past the grid");
  }
}

double path_identity_error(const ControlledPath& path) {
  path.check_consistency();
  const auto d = path.deviation.rows();
  const auto n = static_cast<Eigen::Index>(path.grid.n_steps);
  Vector acc = Vector::Zero(d);
  std::size_t next_jump = 0;
  std::size_t next_refl = 0;
  double worst = 0.0;
  for (Eigen::Index i = 0; i <= n; ++i) {
    if (i > 0) acc += path.controls.col(i - 1) * path.grid.dt;
    while (next_jump < path.jumps.size() &&
           path.jumps[next_jump].step == static_cast<std::size_t>(i)) {
      acc += path.jumps[next_jump++].jump;
    }
    while (next_refl < path.reflections.size() &&
           path.reflections[next_refl].step == static_cast<std::size_t>(i)) {
      const auto& r = path.reflections[next_refl++];
      acc += r.direction * r.dphi;
    }
    const Vector expected = -path.target.col(i) + acc;
    worst = std::max(worst, (path.deviation.col(i) - expected).cwiseAbs().maxCoeff());
  }
  return worst;
}

void write_path_csv(std::ostream& os, const ControlledPath& path) {
  path.check_consistency();
  const auto d = path.deviation.rows();
  os << "time";
  for (Eigen::Index k = 0; k < d; ++k) os << ",x" << k + 1;
  for (Eigen::Index k = 0; k < d; ++k) os << ",u" << k + 1;
  os << ",phi,jump\n";
  os << std::setprecision(17);
  std::size_t next_jump = 0;
  std::size_t next_refl = 0;
  double phi = 0.0;
  for (std::size_t i = 0; i <= path.grid.n_steps; ++i) {
    int jumped = 0;
    while (next_jump < path.jumps.size() && path.jumps[next_jump].step == i) {
      ++next_jump;
      jumped = 1;
    }
    while (next_refl < path.reflections.size() && path.reflections[next_refl].step == i) {
      phi += path.reflections[next_refl++].dphi;
    }
    const auto c = static_cast<Eigen::Index>(i);
    os << path.grid.time(i);
    for (Eigen::Index k = 0; k < d; ++k) os << ',' << path.deviation(k, c);
    for (Eigen::Index k = 0; k < d; ++k) os << ',' << path.controls(k, c);
    os << ',' << phi << ',' << jumped << '\n';
  }
}

}  // namespace ergotrack
