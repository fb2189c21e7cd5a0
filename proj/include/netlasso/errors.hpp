#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace netlasso {

// Every failure raised by the library derives from Error so that callers
// (the CLI in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class PreconditionViolation : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class ConstructionFailure : public Error {
 public:
  using Error::Error;
};

class SearchFailure : public Error {
 public:
  using Error::Error;
};

class ExperimentFailure : public Error {
 public:
  using Error::Error;
};

/// Iterative routine hit its cap; the last estimate and residual travel with
/// the exception.
class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(const std::string& what, double last_estimate,
                     double residual)
      : Error(what), last_estimate_(last_estimate), residual_(residual) {}

  double last_estimate() const { return last_estimate_; }
  double residual() const { return residual_; }

 private:
  double last_estimate_;
  double residual_;
};

class DivergenceFailure : public Error {
 public:
  DivergenceFailure(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}

  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace netlasso
