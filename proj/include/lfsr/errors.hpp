#pragma once

#include <stdexcept>
#include <string>

namespace lfsr {

/// Root of every error the library raises. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeometryError : public Error { using Error::Error; };
class BoundsError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class InputError : public Error { using Error::Error; };
class EstimationError : public Error { using Error::Error; };
class SpecError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class StatsError : public Error { using Error::Error; };

/// Non-finite loss or another numeric breakdown during optimisation.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::string snapshot)
      : Error(what), snapshot_(std::move(snapshot)) {}
  explicit TrainingError(const std::string& what) : Error(what) {}
  const std::string& snapshot() const { return snapshot_; }

 private:
  std::string snapshot_;
};

}  // namespace lfsr
