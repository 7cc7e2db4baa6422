#pragma once

#include <span>
#include <vector>

namespace resotube::geometry {

/// One diameter sample of the tube axis.
struct Knot {
  double x = 0.0; // axial position [m]
  double d = 0.0; // diameter [m]
};

/// Fritsch-Carlson monotone PCHIP slopes for the given knots.
/// Interior: zero where the adjacent secants change sign or one vanishes,
/// otherwise the weighted harmonic mean of the secants. Endpoints use the
/// one-sided three-point formula clamped to preserve shape.
std::vector<double> pchip_slopes(std::span<const Knot> knots);

/// Axially varying circular tube: diameter knots joined by a monotone
/// piecewise cubic Hermite interpolant. Immutable after construction.
class TubeProfile {
 public:
  /// Knots must be strictly increasing in x with positive diameters;
  /// the first knot defines x = 0 and the last x = length().
  explicit TubeProfile(std::vector<Knot> knots);

  /// Two constant-diameter sections of diameter d1 and d2 joined by a
  /// smooth transition over the middle fifth of the tube: knots at
  /// x = 0, 0.4*l (d1) and 0.6*l, l (d2).
  static TubeProfile two_section(double l, double d1, double d2);

  double length() const { return knots_.back().x; }

  /// Interpolated diameter; x must lie in [0, length()].
  double diameter_at(double x) const;
  double radius_at(double x) const { return 0.5 * diameter_at(x); }
  /// Cross-section area A = pi*d^2/4.
  double area_at(double x) const;
  /// Circumference S = pi*d.
  double circumference_at(double x) const;

  std::span<const Knot> knots() const { return knots_; }
  std::span<const double> slopes() const { return slopes_; }

 private:
  std::vector<Knot> knots_;
  std::vector<double> slopes_;
};

} // namespace resotube::geometry
