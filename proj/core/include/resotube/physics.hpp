#pragma once

namespace resotube::physics {

/// Air properties and the loss angular frequency omega_c.
/// Everything is strict SI; defaults are the standard analysis conditions
/// for a ~20 degC tube experiment.
struct PhysicalConstants {
  double rho = 1.20;          // air density [kg/m^3]
  double K = 1.39e5;          // bulk modulus [Pa]
  double c = 340.0;           // speed of sound [m/s]
  double mu = 19.0e-6;        // viscosity [Pa s]
  double eta = 1.40;          // heat-capacity ratio (must be > 1)
  double lambda_th = 2.41e-2; // thermal conductivity [W/(m K)]
  double c_p = 1.01e3;        // specific heat at constant pressure [J/(kg K)]
  double omega_c = 1.64e3;    // angular frequency for the loss terms [rad/s]

  /// Throws std::invalid_argument unless all fields are positive and eta > 1.
  void validate() const;
};

/// Diameter-independent wall-loss constants. The distributed coefficients
/// scale as G = r*G_c and R = R_c/r^3 for a circular tube of radius r.
struct LossConstants {
  double G_c = 0.0; // heat-conduction loss constant
  double R_c = 0.0; // viscous loss constant
};

/// Piston-in-baffle radiation load at the open end.
struct RadiationParams {
  double R_r = 0.0; // radiation resistance [Pa s/m^3]
  double L_r = 0.0; // radiation inertance [Pa s^2/m^3]
};

/// G_c from the rigid-wall theory: 2*pi*(eta-1)/(rho*c^2) * sqrt(lambda*omega_c/(2*c_p*rho)).
double theoretical_Gc(const PhysicalConstants& consts);

/// R_c from the rigid-wall theory: (2/pi) * sqrt(omega_c*rho*mu/2).
double theoretical_Rc(const PhysicalConstants& consts);

/// Distributed heat-conduction loss G = r*G_c at tube radius r (r > 0).
double G_at(double r, double G_c);

/// Distributed viscous loss R = R_c/r^3 at tube radius r (r > 0).
double R_at(double r, double R_c);

/// Radiation resistance and inertance for outlet area A_l > 0:
///   R_r = 128*rho*c/(9*pi^2*A_l),   L_r = 8*rho/(3*pi*sqrt(pi*A_l)).
RadiationParams radiation_params(double A_l, const PhysicalConstants& consts);

} // namespace resotube::physics
