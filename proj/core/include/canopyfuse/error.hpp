#pragma once

#include <stdexcept>
#include <string>

namespace canopyfuse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates an operation's precondition (shapes, ranges, empty sets).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A raster band has fewer than two valid pixels or zero variance.
class DegenerateBandError : public ValidationError {
 public:
  DegenerateBandError(std::size_t band, const std::string& why)
      : ValidationError("degenerate band " + std::to_string(band) + ": " + why), band_(band) {}

  std::size_t band() const noexcept { return band_; }

 private:
  std::size_t band_;
};

/// NaN or Inf met during a forward/backward pass or an optimizer step.
class NumericError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrc {
  bad_magic,
  version_mismatch,
  truncated_payload,
  dimension_overflow,
  io_failure,
  malformed,
};

const char* to_string(FormatErrc code) noexcept;

/// Binary or text file could not be decoded.
class FormatError : public Error {
 public:
  FormatError(FormatErrc code, const std::string& what)
      : Error(std::string(to_string(code)) + ": " + what), code_(code) {}

  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

}  // namespace canopyfuse
