#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace leand {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base of every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or produced non-finite values (exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written or parsed (exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed: non-numeric cells, bad labels, empty files.
/// Treated like an I/O failure by the CLI.
class DataError : public IoError {
 public:
  using IoError::IoError;
};

/// Shape or dimension mismatch between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace leand
