#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plugreg {

/// Bad argument to an elementary operator (negative threshold, radius, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss or gradient evaluated to NaN/inf inside the solver.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, int iterate)
      : std::runtime_error(what + " (iterate " + std::to_string(iterate) + ")"),
        iterate_(iterate) {}
  int iterate() const noexcept { return iterate_; }

 private:
  int iterate_;
};

/// Malformed or missing data; carries the offending row when known.
class DataError : public std::runtime_error {
 public:
  static constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);

  explicit DataError(const std::string& what, std::size_t row = kNoRow)
      : std::runtime_error(row == kNoRow ? what : what + " (row " + std::to_string(row) + ")"),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// |I(z)| fell below the configured floor for some observation.
class SingularCorrection : public DataError {
 public:
  using DataError::DataError;
};

/// Inconsistent configuration (bad fold sizes, R1 <= 0, unknown model, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace plugreg
