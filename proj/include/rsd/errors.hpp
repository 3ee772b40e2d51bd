#ifndef RSD_ERRORS_HPP
#define RSD_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rsd {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incomplete configuration input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A standing modelling assumption does not hold (singular A, non-PSD Q,
/// R not positive definite, unobservable pair, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical solver failed to produce a certified result.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// The design subproblem has no feasible point.
class DesignInfeasible : public Error {
 public:
  DesignInfeasible(const std::string& what, int iteration)
      : Error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

}  // namespace rsd

#endif  // RSD_ERRORS_HPP
