#pragma once

#include <cstdint>
#include <optional>

namespace boxverify {

/// One sample of a verification-effort vs. localization trade-off curve.
struct CurvePoint {
  int iteration = 0;
  std::uint64_t cumulative_verifications = 0;
  double cumulative_seconds = 0.0;
  std::optional<double> corloc;  // absent when no ground truth is available
  double fixed_fraction = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

}  // namespace boxverify
