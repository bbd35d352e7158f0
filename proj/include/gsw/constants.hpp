#pragma once

namespace gsw {

// CODATA exact values (SI).
inline constexpr double kPlanck = 6.62607015e-34;      // J s
inline constexpr double kLightSpeed = 299792458.0;     // m/s

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

}  // namespace gsw
