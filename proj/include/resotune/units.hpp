#pragma once

#include <cmath>
#include <numbers>

// Internal units are SI throughout: Hz, meters, henries, farads, watts.
namespace resotune::units {

inline constexpr double kGHz = 1e9;
inline constexpr double kMHz = 1e6;
inline constexpr double kkHz = 1e3;
inline constexpr double kMicron = 1e-6;
inline constexpr double kNanometer = 1e-9;
inline constexpr double kNanohenry = 1e-9;
inline constexpr double kPicofarad = 1e-12;
inline constexpr double kHour = 3600.0;

/// Reduced Planck constant (J s), exact in the 2019 SI.
inline constexpr double kHbar = 1.054571817e-34;

/// Ground-state hyperfine splitting of 87Rb, the default tuning target.
inline constexpr double kRubidiumHyperfine = 6.834683e9;

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

inline constexpr double two_pi = 2.0 * std::numbers::pi;

}  // namespace resotune::units
