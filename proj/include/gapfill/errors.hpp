#pragma once

#include <stdexcept>
#include <string>

namespace gapfill {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : Error { using Error::Error; };
struct AllMissing : Error { using Error::Error; };
struct NonPositiveValue : Error { using Error::Error; };
struct ZeroVariance : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct MalformedHeader : Error { using Error::Error; };
struct EmptySelection : Error { using Error::Error; };
struct BadDimensions : Error { using Error::Error; };
struct RankTooLarge : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct EmptyMask : Error { using Error::Error; };
struct ZeroTarget : Error { using Error::Error; };
struct PatchTooLarge : Error { using Error::Error; };
struct CoverageGap : Error { using Error::Error; };
struct OddDimensions : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// Non-finite state during iterative solving; carries the iteration index.
struct Diverged : Error {
  int iteration;
  Diverged(const std::string& msg, int iter) : Error(msg), iteration(iter) {}
};

}  // namespace gapfill
