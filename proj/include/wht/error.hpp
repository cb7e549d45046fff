#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wht {

enum class Errc {
  OracleTooLarge,
  Overflow,
  InexactDivision,
  InvalidWorkerCount,
  DiskFull,
  PathExists,
  OutOfBounds,
  IoFailure,
  SizeMismatch,
  BadMetadata,
  BadBlockSize,
  BadArguments,
  EmptyReport,
  BadSpec,
  BadDims,
  DimMismatch,
  DirectIoUnsupported,
  ZeroNoise,
};

std::string_view to_string(Errc code) noexcept;

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::OracleTooLarge: return "OracleTooLarge";
    case Errc::Overflow: return "Overflow";
    case Errc::InexactDivision: return "InexactDivision";
    case Errc::InvalidWorkerCount: return "InvalidWorkerCount";
    case Errc::DiskFull: return "DiskFull";
    case Errc::PathExists: return "PathExists";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::IoFailure: return "IoFailure";
    case Errc::SizeMismatch: return "SizeMismatch";
    case Errc::BadMetadata: return "BadMetadata";
    case Errc::BadBlockSize: return "BadBlockSize";
    case Errc::BadArguments: return "BadArguments";
    case Errc::EmptyReport: return "EmptyReport";
    case Errc::BadSpec: return "BadSpec";
    case Errc::BadDims: return "BadDims";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::DirectIoUnsupported: return "DirectIoUnsupported";
    case Errc::ZeroNoise: return "ZeroNoise";
  }
  return "Unknown";
}

}  // namespace wht
