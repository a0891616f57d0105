#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qkdsim {

// Bad configuration: out-of-range values, unknown keys, missing sections.
// Maps to CLI exit code 2 (together with std::domain_error from validation).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input data (tag files). CLI exit code 3.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Input parse failure; carries the 1-based line number of the offending line
// (the header counts as line 1).
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : InputError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Numerical failure: non-converging fit, empty optimization landscape, or a
// run that would exceed resource limits. CLI exit code 4.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Gaussian peak fit failure. `kind` distinguishes "no significant peak in the
// data" (a legitimate measurement outcome, reported gracefully by the CLI)
// from genuine numerical breakdown.
class FitError : public NumericalError {
 public:
  enum class Kind { NoPeak, NotConverged, Degenerate };

  FitError(Kind kind, const std::string& what) : NumericalError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// An optimization found no parameter set with a positive secure-key rate.
class NoKeyError : public NumericalError {
 public:
  explicit NoKeyError(const std::string& what) : NumericalError(what) {}
};

// The requested simulation would produce more tags than the configured cap.
class CapacityError : public NumericalError {
 public:
  explicit CapacityError(const std::string& what) : NumericalError(what) {}
};

}  // namespace qkdsim
