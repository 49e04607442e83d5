#pragma once

#include <cmath>
#include <numbers>
#include <utility>

namespace viewgen {

// Reduces degrees into [0, 360). fmod is exact, so d and d + 360k reduce to
// the same value whenever d + 360k is itself representable.
inline double wrap_degrees(double degrees) {
  double r = std::fmod(degrees, 360.0);
  if (r < 0.0) r += 360.0;
  if (r >= 360.0) r -= 360.0;
  return r;
}

// Wraps into (-180, 180].
inline double signed_degrees(double degrees) {
  const double r = wrap_degrees(degrees);
  return r > 180.0 ? r - 360.0 : r;
}

// (sin, cos) of an angle in degrees, exact at multiples of 90 and periodic
// under +-360.
inline std::pair<double, double> sincos_degrees(double degrees) {
  const double r = wrap_degrees(degrees);
  const int quadrant = static_cast<int>(r / 90.0) & 3;
  const double rem = (r - 90.0 * quadrant) * std::numbers::pi / 180.0;
  const double s = std::sin(rem);
  const double c = std::cos(rem);
  switch (quadrant) {
    case 0: return {s, c};
    case 1: return {c, -s};
    case 2: return {-s, -c};
    default: return {-c, s};
  }
}

}  // namespace viewgen
