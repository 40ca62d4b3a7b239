#pragma once

#include <stdexcept>
#include <string>

namespace mclab {

/// Base class for every domain failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// σ_{l+1} vanishes (or is negative) where the quotient σ_{l+2}/σ_{l+1} is needed.
class DegenerateQuotient : public Error {
 public:
  using Error::Error;
};

/// The operator's normal vector X*_F is too small to define Γ⊥.
class DegenerateNormal : public Error {
 public:
  using Error::Error;
};

class GridTooSmall : public Error {
 public:
  using Error::Error;
};

class EmptyRegion : public Error {
 public:
  using Error::Error;
};

class NoTestablePoints : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Base for failures raised while integrating a flow; carries the simulation time.
class FlowError : public Error {
 public:
  FlowError(const std::string& what, double time)
      : Error(what + " (t=" + std::to_string(time) + ")"), time_(time) {}
  [[nodiscard]] double time() const noexcept { return time_; }

 private:
  double time_;
};

class BlowUp : public FlowError {
 public:
  using FlowError::FlowError;
};

class StabilityViolation : public FlowError {
 public:
  using FlowError::FlowError;
};

class NonConvergence : public FlowError {
 public:
  using FlowError::FlowError;
};

class SelfIntersection : public FlowError {
 public:
  using FlowError::FlowError;
};

class CollapseDetected : public FlowError {
 public:
  using FlowError::FlowError;
};

}  // namespace mclab
