#pragma once

#include <stdexcept>
#include <string>

namespace osdp {

// Malformed input file (bad syntax, wrong JSON types).
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid input that violates an invariant (duplicate ids,
// negative counts, out-of-range flags).
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Model cannot fit on the device at any admissible plan.
class InfeasibleError : public std::runtime_error {
public:
  InfeasibleError(const std::string& what, double memory_gap_bytes)
      : std::runtime_error(what), memory_gap_bytes(memory_gap_bytes) {}

  double memory_gap_bytes = 0.0;
};

// A cost query for an operator with no calibrated compute coefficient.
class CalibrationError : public std::runtime_error {
public:
  explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

// Measurement set cannot pin down the coefficients.
class UnderdeterminedFitError : public std::runtime_error {
public:
  explicit UnderdeterminedFitError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace osdp
