#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace anisoflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument to an operation (negative stabilizer, size mismatch, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Invalid object construction (bad anisotropy parameters, bad curve data).
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// A function was evaluated outside its domain (e.g. gamma <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A segment collapsed below the admissible length.
class DegenerateMeshError : public Error {
 public:
  DegenerateMeshError(const std::string& what, std::size_t segment)
      : Error(what), segment_(segment) {}
  std::size_t segment() const noexcept { return segment_; }

 private:
  std::size_t segment_;
};

/// The minimal stabilizing function has no finite value at some angle.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double theta) : Error(what), theta_(theta) {}
  double theta() const noexcept { return theta_; }

 private:
  double theta_;
};

/// Newton failure, contact point crossover, or any other failed time step.
class StepFailure : public Error {
 public:
  StepFailure(const std::string& what, std::vector<double> residual_history = {})
      : Error(what), history_(std::move(residual_history)) {}
  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// Polygon input that violates simplicity or has zero area.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace anisoflow
