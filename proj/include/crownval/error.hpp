#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crownval {

/// Domain-level failure: invalid configuration, empty inputs, undefined results.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input/output failure (missing files, unwritable directories).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line (or data row) number.
class ParseError : public IoError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : IoError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace crownval
