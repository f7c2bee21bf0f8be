#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace skf {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Input outside the mathematical domain of an operation (non-SPD matrix,
// snr_hat <= 1, coincident dipole/sensor, zero-signal noise request).
class DomainError : public Error {
public:
  using Error::Error;
};

// A structural precondition was violated (dimension mismatch, too few samples).
class PreconditionError : public Error {
public:
  using Error::Error;
};

// Base for failures that happen inside a numerical recursion. A filter attaches
// the time step it was processing when the failure propagates out of it.
class NumericalError : public Error {
public:
  explicit NumericalError(const std::string& what, std::optional<std::size_t> step = std::nullopt)
      : Error(what), step_(step) {}

  std::optional<std::size_t> step() const noexcept { return step_; }

private:
  std::optional<std::size_t> step_;
};

class IterationFailure : public NumericalError {
public:
  IterationFailure(const std::string& what, double last_residual, int iterations)
      : NumericalError(what), residual_(last_residual), iterations_(iterations) {}

  double last_residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

private:
  double residual_;
  int iterations_;
};

// A diagonal entry that must be raised to the -1/2 power was not positive.
class DegeneracyError : public NumericalError {
public:
  DegeneracyError(const std::string& what, std::size_t index)
      : NumericalError(what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

// Filter failure re-raised with the offending step index attached.
class StepError : public NumericalError {
public:
  StepError(const std::string& what, std::size_t step) : NumericalError(what, step) {}
};

class DivergenceError : public NumericalError {
public:
  DivergenceError(const std::string& what, std::size_t step) : NumericalError(what, step) {}
};

class ParseError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Configuration schema violation; path is a JSON-pointer-like field path.
class ConfigError : public Error {
public:
  ConfigError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

// Metric requested on an input where it is not defined (all-zero weights).
class UndefinedMetricError : public Error {
public:
  using Error::Error;
};

}  // namespace skf
