#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kedmd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: shape mismatch, invalid parameter count, bad config value.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Kernel cannot be evaluated (all outer weights zero, asymmetric kernel, ...).
class DegenerateKernel : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf showed up. `primitive` is the offending primitive index when known.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, long primitive = -1, long row = -1, long col = -1)
      : Error(what), primitive_(primitive), row_(row), col_(col) {}

  [[nodiscard]] long primitive() const noexcept { return primitive_; }
  [[nodiscard]] long row() const noexcept { return row_; }
  [[nodiscard]] long col() const noexcept { return col_; }

 private:
  long primitive_;
  long row_;
  long col_;
};

/// Operation requested on a model of the wrong variant (e.g. spectral maps on a simplified model).
class WrongVariant : public Error {
 public:
  using Error::Error;
};

/// Eigenfunction vanishes on the evaluation set, so its residual is undefined.
class DegenerateEigenfunction : public Error {
 public:
  using Error::Error;
};

/// A trajectory (simulated or predicted) left the finite range.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long last_finite_step)
      : Error(what), last_finite_step_(last_finite_step) {}
  [[nodiscard]] long last_finite_step() const noexcept { return last_finite_step_; }

 private:
  long last_finite_step_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : Error(path + ": " + message), path_(path) {}
  [[nodiscard]] const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace kedmd
