#ifndef ERGOTRACK_ERRORS_HPP
#define ERGOTRACK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ergotrack {

/// Factorization failures, non-finite states and other numerical breakdowns.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A strategy description that cannot produce a valid controlled path.
class InvalidStrategy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Power iteration ran out of budget before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double spectral_gap)
      : std::runtime_error(what), spectral_gap_(spectral_gap) {}
  double spectral_gap() const noexcept { return spectral_gap_; }

 private:
  double spectral_gap_;
};

/// Two limit-cost estimators disagree beyond their combined error bars.
class ConsistencyAlarm : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ergotrack

#endif  // ERGOTRACK_ERRORS_HPP
