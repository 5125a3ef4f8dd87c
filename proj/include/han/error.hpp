#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace han {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Attention over zero tokens.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters, partitions, or configuration keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller misuse: wrong frame count, non-scalar loss, bad label.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Unreadable or inconsistent data files.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Checkpoint header or layout problems.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace han
