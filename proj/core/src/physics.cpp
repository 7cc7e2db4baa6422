#include "resotube/physics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace resotube::physics {

namespace {
void require_positive(double v, const char* name) {
  if (!(v > 0.0)) {
    throw std::invalid_argument(std::string(name) + " must be > 0");
  }
}
} // namespace

void PhysicalConstants::validate() const {
  require_positive(rho, "rho");
  require_positive(K, "K");
  require_positive(c, "c");
  require_positive(mu, "mu");
  require_positive(eta, "eta");
  require_positive(lambda_th, "lambda_th");
  require_positive(c_p, "c_p");
  require_positive(omega_c, "omega_c");
  if (!(eta > 1.0)) {
    throw std::invalid_argument("eta must be > 1");
  }
}

double theoretical_Gc(const PhysicalConstants& consts) {
  consts.validate();
  const double front = 2.0 * std::numbers::pi * (consts.eta - 1.0) / (consts.rho * consts.c * consts.c);
  return front * std::sqrt(consts.lambda_th * consts.omega_c / (2.0 * consts.c_p * consts.rho));
}

double theoretical_Rc(const PhysicalConstants& consts) {
  consts.validate();
  return (2.0 / std::numbers::pi) * std::sqrt(consts.omega_c * consts.rho * consts.mu / 2.0);
}

double G_at(double r, double G_c) {
  if (!(r > 0.0)) {
    throw std::invalid_argument("tube radius must be > 0");
  }
  return r * G_c;
}

double R_at(double r, double R_c) {
  if (!(r > 0.0)) {
    throw std::invalid_argument("tube radius must be > 0");
  }
  return R_c / (r * r * r);
}

RadiationParams radiation_params(double A_l, const PhysicalConstants& consts) {
  if (!(A_l > 0.0)) {
    throw std::invalid_argument("outlet area must be > 0");
  }
  const double pi = std::numbers::pi;
  RadiationParams out;
  out.R_r = 128.0 * consts.rho * consts.c / (9.0 * pi * pi * A_l);
  out.L_r = 8.0 * consts.rho / (3.0 * pi * std::sqrt(pi * A_l));
  return out;
}

} // namespace resotube::physics
