#pragma once

#include <stdexcept>
#include <string>

namespace coopt {

/// Input or parameter that violates a domain invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The conic solver could not produce a usable solution.
class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, std::string log)
      : std::runtime_error(what), log_(std::move(log)) {}

  const std::string& log() const noexcept { return log_; }

 private:
  std::string log_;
};

}  // namespace coopt
