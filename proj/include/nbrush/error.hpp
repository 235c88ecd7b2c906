#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nbrush {

// Base of every error raised by the library. The CLI maps DataError to exit
// code 3 and anything else to 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data is malformed or violates a documented precondition.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Gradient or state became non-finite during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace nbrush
