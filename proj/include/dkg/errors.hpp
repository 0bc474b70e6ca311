#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dkg {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text. Line and column are 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t column) {
    std::string out = "line " + std::to_string(line);
    if (column > 0) out += ", column " + std::to_string(column);
    return out + ": " + what;
  }

  std::size_t line_;
  std::size_t column_;
};

// Well-formed input that violates a semantic constraint (negative weight,
// duplicate fact, repeated variable in a literal, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// The theory cannot be compiled (non-polytree clause, undefined predicate,
// conflicting variable types, ...).
class CompileError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// An API or CLI was called in the wrong state or with bad arguments.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace dkg
