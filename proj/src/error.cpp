#include "tunnel/error.hpp"

namespace tunnel {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoQualifyingKeypoints: return "NoQualifyingKeypoints";
    case ErrorCode::EmptyTunnel: return "EmptyTunnel";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::EvenWindow: return "EvenWindow";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::OddDim: return "OddDim";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::IndivisibleSize: return "IndivisibleSize";
    case ErrorCode::BadRange: return "BadRange";
    case ErrorCode::CoverageGap: return "CoverageGap";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

bool is_numeric(ErrorCode code) {
  return code == ErrorCode::NonFiniteInput || code == ErrorCode::NonFinite;
}

}  // namespace tunnel
