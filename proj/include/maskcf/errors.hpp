#pragma once

#include <stdexcept>
#include <string>

namespace maskcf {

// Invalid arguments are reported with std::invalid_argument; everything else
// derives from Error so callers can map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularSystemError : public Error {
 public:
  using Error::Error;
};

class NumericDivergenceError : public Error {
 public:
  NumericDivergenceError(const std::string& what, int iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, int line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TrackingLostError : public Error {
 public:
  using Error::Error;
};

}  // namespace maskcf
