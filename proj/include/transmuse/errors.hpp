#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace transmuse {

/// Base class for every error raised by the library. `kind()` is a short
/// machine-readable tag used by the CLI when reporting failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
  virtual const char* kind() const noexcept { return "error"; }
};

/// Precondition or invariant violation on caller-supplied values.
class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_argument"; }
};

/// Malformed input text. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& msg)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a data invariant (e.g. negative volume).
class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

// Checkpoint decoding failures.
class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format"; }
};

class VersionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "version"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& msg)
      : Error("epoch " + std::to_string(epoch) + ": " + msg), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }
  const char* kind() const noexcept override { return "divergence"; }

 private:
  int epoch_;
};

/// A pipeline stage failed; wraps the underlying error message.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string inner_kind, const std::string& msg)
      : Error(stage + ": " + msg), stage_(std::move(stage)), inner_kind_(std::move(inner_kind)) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& inner_kind() const noexcept { return inner_kind_; }
  const char* kind() const noexcept override { return "stage"; }

 private:
  std::string stage_;
  std::string inner_kind_;
};

}  // namespace transmuse
