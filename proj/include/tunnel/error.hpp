#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tunnel {

enum class ErrorCode {
  NoQualifyingKeypoints,
  EmptyTunnel,
  NonFiniteInput,
  EvenWindow,
  TooShort,
  DegenerateBox,
  SizeMismatch,
  LengthMismatch,
  OddDim,
  DimensionMismatch,
  ShapeMismatch,
  NonFinite,
  IndivisibleSize,
  BadRange,
  CoverageGap,
  InvalidArgument,
  Io,
  Parse,
};

std::string_view to_string(ErrorCode code);

/// True for errors that indicate a numeric failure rather than bad input.
bool is_numeric(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace tunnel
