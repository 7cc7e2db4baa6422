#include "resotube/tube_profile.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace resotube::geometry {

std::vector<double> pchip_slopes(std::span<const Knot> knots) {
  const std::size_t n = knots.size();
  if (n < 2) {
    throw std::invalid_argument("pchip_slopes needs at least 2 knots");
  }
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = knots[k + 1].x - knots[k].x;
    if (!(h[k] > 0.0)) {
      throw std::invalid_argument("knot positions must be strictly increasing");
    }
    delta[k] = (knots[k + 1].d - knots[k].d) / h[k];
  }

  std::vector<double> m(n, 0.0);
  if (n == 2) {
    m[0] = m[1] = delta[0];
    return m;
  }

  // interior: Fritsch-Carlson weighted harmonic mean, zero across extrema
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double prod = delta[k - 1] * delta[k];
    if (prod > 0.0) {
      const double a = (h[k - 1] + 2.0 * h[k]) / (3.0 * (h[k - 1] + h[k]));
      m[k] = prod / (a * delta[k] + (1.0 - a) * delta[k - 1]);
    } else {
      m[k] = 0.0;
    }
  }

  // endpoints: one-sided three-point estimate, clamped to preserve shape
  auto endpoint = [](double h0, double h1, double d0, double d1) {
    double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0.0) {
      s = 0.0;
    } else if (d0 * d1 < 0.0 && std::abs(s) > 3.0 * std::abs(d0)) {
      s = 3.0 * d0;
    }
    return s;
  };
  m[0] = endpoint(h[0], h[1], delta[0], delta[1]);
  m[n - 1] = endpoint(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  return m;
}

TubeProfile::TubeProfile(std::vector<Knot> knots) : knots_(std::move(knots)) {
  if (knots_.size() < 2) {
    throw std::invalid_argument("tube profile needs at least 2 knots");
  }
  for (const auto& k : knots_) {
    if (!(k.d > 0.0)) {
      throw std::invalid_argument("tube diameters must be > 0");
    }
  }
  if (knots_.front().x != 0.0) {
    throw std::invalid_argument("first knot must sit at x = 0");
  }
  slopes_ = pchip_slopes(knots_); // also rejects non-increasing x
}

TubeProfile TubeProfile::two_section(double l, double d1, double d2) {
  if (!(l > 0.0)) {
    throw std::invalid_argument("tube length must be > 0");
  }
  return TubeProfile({{0.0, d1}, {0.4 * l, d1}, {0.6 * l, d2}, {l, d2}});
}

double TubeProfile::diameter_at(double x) const {
  if (!(x >= 0.0 && x <= length())) {
    throw std::domain_error("position outside the tube");
  }
  // containing interval [x_k, x_{k+1}]
  auto it = std::upper_bound(knots_.begin(), knots_.end(), x,
                             [](double v, const Knot& k) { return v < k.x; });
  std::size_t k = static_cast<std::size_t>(it - knots_.begin());
  k = (k == 0) ? 0 : k - 1;
  if (k + 1 >= knots_.size()) {
    k = knots_.size() - 2;
  }

  const double h = knots_[k + 1].x - knots_[k].x;
  const double t = (x - knots_[k].x) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
  const double h10 = t3 - 2.0 * t2 + t;
  const double h01 = -2.0 * t3 + 3.0 * t2;
  const double h11 = t3 - t2;
  return knots_[k].d * h00 + h * slopes_[k] * h10 + knots_[k + 1].d * h01 + h * slopes_[k + 1] * h11;
}

double TubeProfile::area_at(double x) const {
  const double d = diameter_at(x);
  return std::numbers::pi * d * d / 4.0;
}

double TubeProfile::circumference_at(double x) const {
  return std::numbers::pi * diameter_at(x);
}

} // namespace resotube::geometry
