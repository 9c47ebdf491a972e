#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace markfun {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Input data violates a structural invariant (negative rate, non-finite
/// entry, malformed matrix, ...).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Index or dimension out of range.
class IndexError : public Error {
public:
  using Error::Error;
};

/// An iterative scheme exhausted its budget. Carries the per-cycle update
/// norms so callers can decide whether to accept the partial answer.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, std::vector<double> update_norms)
      : Error(what), update_norms(std::move(update_norms)) {}
  std::vector<double> update_norms;
};

/// A measure specification is inconsistent with the model it is applied to.
class SpecError : public Error {
public:
  using Error::Error;
};

/// A linear solve failed or produced an answer outside its feasible range.
class SolveError : public Error {
public:
  using Error::Error;
};

/// A computation would exceed a hard resource bound.
class ResourceError : public Error {
public:
  using Error::Error;
};

/// File could not be read, written or parsed.
class IoError : public Error {
public:
  using Error::Error;
};

} // namespace markfun
