#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace decompart {

/// Absolute state floor below which storages are treated as empty.
/// Every ratio with a denominator at or below this floor follows the
/// 0/0 -> 0 convention; the decomposition factors stay bounded in [0,1]
/// even as a compartment drains.
inline constexpr double kEpsState = 1e-12;

/// Tolerance for negative flow excursions produced by integrator round-off.
/// Evaluated flows in [-kEpsFlow, 0) are treated as zero; anything below
/// -kEpsFlow is a model error.
inline constexpr double kEpsFlow = 1e-9;

/// Quotient with the 0/0 -> 0 convention on the state floor.
inline double guarded_ratio(double num, double den) {
  if (std::abs(den) <= kEpsState) return 0.0;
  return num / den;
}

/// Base class for all engine errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class EvalError : public Error {
 public:
  using Error::Error;
};

class NegativeFlow : public Error {
 public:
  NegativeFlow(int i, int j, double value, double t)
      : Error("negative flow f(" + std::to_string(i) + "," + std::to_string(j) +
              ") = " + std::to_string(value) + " at t = " + std::to_string(t)),
        from(j),
        to(i),
        value(value),
        t(t) {}
  int from, to;
  double value;
  double t;
};

class StepSizeUnderflow : public Error {
 public:
  explicit StepSizeUnderflow(double t)
      : Error("step size underflow at t = " + std::to_string(t)), t(t) {}
  double t;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

class QuadratureNonconvergence : public Error {
 public:
  using Error::Error;
};

class ZeroThroughflow : public Error {
 public:
  using Error::Error;
};

class PathSetTooLarge : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class UnknownLabel : public Error {
 public:
  using Error::Error;
};

class IOError : public Error {
 public:
  using Error::Error;
};

}  // namespace decompart
