#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wir {

enum class Errc {
  InvalidArgument,
  NonFinite,
  NotSymmetric,
  BadMagic,
  Truncated,
  MaxvalUnsupported,
  ImageTooSmall,
  NoContour,
  DimMismatch,
  TooFewSamples,
  NoValidTriplets,
  InsufficientWriters,
  DimensionTooLarge,
  ZeroVector,
  KOutOfRange,
  EmptyGallery,
  Io,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonFinite: return "NonFinite";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::BadMagic: return "BadMagic";
    case Errc::Truncated: return "Truncated";
    case Errc::MaxvalUnsupported: return "MaxvalUnsupported";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::NoContour: return "NoContour";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::NoValidTriplets: return "NoValidTriplets";
    case Errc::InsufficientWriters: return "InsufficientWriters";
    case Errc::DimensionTooLarge: return "DimensionTooLarge";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::KOutOfRange: return "KOutOfRange";
    case Errc::EmptyGallery: return "EmptyGallery";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a machine
/// readable code; the CLI maps codes onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace wir
