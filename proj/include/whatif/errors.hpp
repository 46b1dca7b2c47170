#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace whatif {

/// Caller broke a documented precondition (shape mismatch, out-of-range argument).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The miscoverage level is too small for the calibration set size.
class PreconditionError : public std::invalid_argument {
 public:
  PreconditionError(const std::string& what, double min_alpha)
      : std::invalid_argument(what), min_alpha_(min_alpha) {}
  double min_alpha() const noexcept { return min_alpha_; }

 private:
  double min_alpha_;
};

/// Every density-ratio weight is zero: the target app is never chosen.
class DegeneratePolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Bad or incomplete configuration (missing table cell, unknown key, unparsable value).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Not enough logged samples under the target app.
class InsufficientDataError : public std::runtime_error {
 public:
  InsufficientDataError(const std::string& what, std::size_t available)
      : std::runtime_error(what), available_(available) {}
  std::size_t available() const noexcept { return available_; }

 private:
  std::size_t available_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace whatif
