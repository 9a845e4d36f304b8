#pragma once

#include <stdexcept>
#include <string>

namespace mbstat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input, violated precondition or bad configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A computation that cannot produce a meaningful number: overflow,
/// degenerate denominators, stability limits.
class NumericError : public Error {
 public:
  using Error::Error;
};

class CsvError : public InputError {
 public:
  CsvError(std::size_t row, const std::string& what)
      : InputError("row " + std::to_string(row) + ": " + what), row_(row) {}

  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

}  // namespace mbstat
