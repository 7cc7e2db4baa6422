#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "resotube/physics.hpp"
#include "resotube/tube_profile.hpp"
#include "resotube/waveform.hpp"

namespace resotube::fdm {

enum class OutletModel {
  radiation, // piston-in-baffle load, the physical configuration
  rigid      // U(l) = 0, used for energy-conservation checks
};

struct FdmConfig {
  double dx = 1e-3;       // spatial step [m]; must divide the tube length
  double dt = 0.5e-6;     // requested time step [s]; adjusted so one period
                          // is an integer number of steps
  int periods_max = 200;  // give up after this many simulated periods
  double steady_tol = 1e-3;
  OutletModel outlet = OutletModel::radiation;

  /// Throws std::invalid_argument on CFL >= 1, non-integer cell count, or
  /// nonsensical bounds. `dt_adjusted` is the step actually used.
  void validate(double tube_length, double sound_speed, double dt_adjusted) const;
};

/// Centered-time centered-space leapfrog solver for the transmission-line
/// system on a collocated grid. The damping terms are averaged over the
/// old and new time levels, which keeps the leapfrog computational mode
/// bounded; the inlet is a forced-flow node and the outlet couples to the
/// radiation load through a trapezoidal update.
class Solver {
 public:
  /// `inlet` provides the particle velocity v(t) at x = 0 (the forced
  /// volume velocity is A(0)*v). Pass nullptr for a sealed (U = 0) inlet;
  /// then no period is defined and dt is used exactly as configured.
  Solver(const FdmConfig& config, const geometry::TubeProfile& profile,
         const physics::PhysicalConstants& consts, const physics::LossConstants& loss,
         const excitation::PeriodicWaveform* inlet);

  /// Advance one time level. Throws NumericalError when the state leaves
  /// the finite range.
  void step();

  std::size_t node_count() const { return nx_; }
  std::size_t steps_per_period() const { return nt_; }
  double dt() const { return dt_; }
  double dx() const { return dx_; }
  double cfl() const { return cfl_; }
  std::int64_t step_index() const { return n_; }

  std::span<const double> p() const { return p_now_; }
  std::span<const double> U() const { return U_now_; }
  double Ur() const { return Ur_now_; }

  /// Install an initial condition on both leapfrog levels (standing start).
  void set_initial_state(std::span<const double> p, std::span<const double> U);

  /// Total acoustic energy  sum_i A_i p_i^2/(2K) + rho U_i^2/(2 A_i) dx
  /// (trapezoidal in x) of the current level.
  double energy() const;

 private:
  std::size_t nx_ = 0, nt_ = 0;
  double dx_ = 0, dt_ = 0, cfl_ = 0;
  OutletModel outlet_;
  double Rr_ = 0, Lr_ = 0, rad_k_ = 0;
  std::vector<double> area_, g_loss_, r_loss_;
  std::vector<double> cp_keep_, cp_dux_, cu_keep_, cu_dpx_;
  std::vector<double> exc_; // A(0)*v at the nt in-period offsets; empty when sealed
  std::vector<double> p_prev_, p_now_, p_next_, U_prev_, U_now_, U_next_;
  double Ur_now_ = 0.0;
  std::int64_t n_ = 0;
  double K_ = 0, rho_ = 0;
};

struct FdmSolution {
  double dx = 0, dt = 0;
  std::size_t nx = 0, nt = 0; // nt = steps per period
  double cfl = 0;
  std::vector<double> p;  // row-major [nt][nx], one steady period, t = 0 first
  std::vector<double> U;  // same layout
  std::vector<double> Ur; // [nt]
  std::optional<excitation::PeriodicWaveform> p_l;  // pressure at x = l
  std::optional<excitation::PeriodicWaveform> U_0;  // volume velocity at x = 0
  double residual = 0.0; // period-to-period max-norm residual achieved
  int periods = 0;       // periods simulated
  bool converged = false;
};

/// Integrate from rest until the outlet pressure repeats period to period
/// within config.steady_tol (max-norm, relative), then return the final
/// period with t = 0 aligned to the excitation period start. A solution is
/// returned even when periods_max is exhausted; check `converged`.
FdmSolution run_to_steady_state(const FdmConfig& config, const geometry::TubeProfile& profile,
                                const physics::PhysicalConstants& consts,
                                const physics::LossConstants& loss,
                                const excitation::PeriodicWaveform& inlet);

struct SensitivityResult {
  FdmSolution baseline, g_doubled, r_doubled;
  double dev_g = 0.0;   // relative L2 deviation of p(l,.) for G_c -> 2 G_c
  double dev_r = 0.0;   // same for R_c -> 2 R_c
  double ratio = 0.0;   // dev_g / dev_r
};

/// Steady outlet waveforms for {G0,R0}, {2G0,R0} and {G0,2R0}.
SensitivityResult sensitivity_study(const FdmConfig& config, const geometry::TubeProfile& profile,
                                    const physics::PhysicalConstants& consts,
                                    const physics::LossConstants& baseline,
                                    const excitation::PeriodicWaveform& inlet);

/// Add zero-mean Gaussian noise with sigma = level * stddev(w) to every
/// sample. Deterministic for a fixed seed (Box-Muller over mt19937_64).
excitation::PeriodicWaveform add_noise(const excitation::PeriodicWaveform& w, double level,
                                       std::uint64_t seed);

/// Relative L2 distance between two periodic signals of equal f0, computed
/// from their Fourier coefficients (grid-independent).
double relative_l2(const excitation::PeriodicWaveform& w, const excitation::PeriodicWaveform& ref);

} // namespace resotube::fdm
