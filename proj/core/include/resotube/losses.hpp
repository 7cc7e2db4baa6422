#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "resotube/physics.hpp"
#include "resotube/resonet.hpp"
#include "resotube/tube_profile.hpp"
#include "resotube/waveform.hpp"

namespace resotube::loss {

/// Collocation point counts and the sampling seed.
struct CollocationConfig {
  std::size_t n_pde = 5000;       ///< interior residual points
  std::size_t n_bc = 1000;        ///< inlet boundary points
  std::size_t n_coupling = 1000;  ///< outlet radiation points
  std::size_t n_periodic = 1000;  ///< periodicity stations
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument if any count is zero.
  void validate() const;
};

/// Fixed point sets the losses are evaluated on. Generated once per run
/// from low-discrepancy sequences (Halton 2,3 for the interior, van der
/// Corput elsewhere) with a seeded rotation, so the loss landscape is
/// stable across epochs and reruns reproduce bit-identically.
struct CollocationSets {
  double length = 0.0;  ///< tube length the x coordinates live in
  double period = 0.0;  ///< excitation period the t coordinates live in

  std::vector<double> e_x, e_t;  ///< interior (x,t)
  std::vector<double> b_t;       ///< inlet times (x = 0)
  std::vector<double> b_v;       ///< inlet particle velocity data at b_t [m/s]
  std::vector<double> c_t;       ///< outlet times (x = l)
  std::vector<double> p_x;       ///< periodicity stations, paired t = 0 / t = period
  std::vector<double> m_t;       ///< measurement times (x = l)
  std::vector<double> m_p;       ///< measured pressure at m_t [Pa]

  static CollocationSets generate(const CollocationConfig& config, double length, double period);

  /// Samples the inlet excitation at the boundary times (fills b_v).
  void attach_inlet_velocity(const excitation::PeriodicWaveform& velocity);

  /// Keeps every size()/n-th sample of the measured pressure waveform as
  /// (m_t, m_p). Throws if n is zero or exceeds the sample count.
  void attach_pressure_data(const excitation::PeriodicWaveform& pressure, std::size_t n);
};

/// Per-term weights. Defaults normalize each residual by its
/// characteristic scale so every term is O(1) at initialization.
struct LossWeights {
  double pde_continuity = 1.0;  ///< volume-velocity balance residual
  double pde_momentum = 1.0;    ///< pressure-gradient residual
  double bc = 1.0;              ///< inlet particle-velocity match
  double coupling = 1.0;        ///< radiation ODE + outlet pressure match
  double periodic0_U = 1.0;     ///< U value match at t = 0 vs T
  double periodic0_p = 1.0;     ///< p value match
  double periodic1_U = 1.0;     ///< dU/dt match
  double periodic1_p = 1.0;     ///< dp/dt match
  double data = 1.0;            ///< measured outlet pressure match

  /// Dimensional normalization: each weight is 1/(residual scale)^2
  /// built from the model scales and the inlet area.
  static LossWeights from_scales(const nn::ScalingSpec& scaling, double inlet_area);

  /// Throws std::invalid_argument unless all weights are finite and >= 0.
  void validate() const;
};

/// Weighted per-term values. Each term already includes its weight;
/// `total` is their sum (data included only in inverse mode).
struct LossBreakdown {
  double pde = 0.0;
  double bc = 0.0;
  double coupling = 0.0;
  double periodic0 = 0.0;
  double periodic1 = 0.0;
  double data = 0.0;
  double total = 0.0;
};

enum class LossMode {
  forward_only,  ///< physics + boundary terms; measurements ignored
  inverse,       ///< adds the measured-pressure data term
};

/// One point of an externally supplied field, for evaluating the PDE
/// residuals against reference solutions (oracle cross-checks).
struct FieldPoint {
  double x = 0.0;
  double p = 0.0, U = 0.0;
  double dp_dx = 0.0, dp_dt = 0.0;
  double dU_dx = 0.0, dU_dt = 0.0;
};

/// Transmission-line residuals at one point: first the volume-velocity
/// balance (continuity), then the pressure-gradient (momentum) residual.
std::pair<double, double> pde_residual(const FieldPoint& f, double area, double radius,
                                       const physics::PhysicalConstants& consts, double gc,
                                       double rc);

/// Evaluates the full loss and its parameter gradient for a model over
/// fixed collocation sets. All reductions run in a fixed order, chunked,
/// single-threaded, so results are bit-reproducible.
class LossEngine {
 public:
  /// Validates set domains and data attachments. The tube profile is
  /// copied; radii/areas at the interior points are precomputed.
  LossEngine(geometry::TubeProfile tube, const physics::PhysicalConstants& constants,
             CollocationSets sets, LossWeights weights);

  /// Loss only. Inverse mode requires attached measurements.
  LossBreakdown evaluate(const nn::ResoNetModel& model, LossMode mode) const;

  /// Loss plus d(total)/d(params): grad is zeroed, then accumulated.
  /// The loss-constant slots receive log-space gradients.
  LossBreakdown evaluate_with_grad(const nn::ResoNetModel& model, LossMode mode,
                                   std::span<double> grad) const;

  /// Individual weighted terms (for logging and tests).
  double pde_loss(const nn::ResoNetModel& model) const;
  double bc_loss(const nn::ResoNetModel& model) const;
  double coupling_loss(const nn::ResoNetModel& model) const;
  std::pair<double, double> periodicity_loss(const nn::ResoNetModel& model) const;
  double data_loss(const nn::ResoNetModel& model) const;

  const CollocationSets& sets() const { return sets_; }
  const LossWeights& weights() const { return weights_; }
  const physics::RadiationParams& radiation() const { return radiation_; }
  double inlet_area() const { return area_inlet_; }

 private:
  void check_model(const nn::ResoNetModel& model) const;
  double term_pde(const nn::ResoNetModel& model, std::span<double> grad) const;
  double term_bc(const nn::ResoNetModel& model, std::span<double> grad) const;
  double term_coupling(const nn::ResoNetModel& model, std::span<double> grad) const;
  std::pair<double, double> term_periodicity(const nn::ResoNetModel& model,
                                             std::span<double> grad) const;
  double term_data(const nn::ResoNetModel& model, std::span<double> grad) const;
  LossBreakdown evaluate_impl(const nn::ResoNetModel& model, LossMode mode,
                              std::span<double> grad) const;

  geometry::TubeProfile tube_;
  physics::PhysicalConstants constants_;
  CollocationSets sets_;
  LossWeights weights_;
  physics::RadiationParams radiation_;
  double area_inlet_ = 0.0;
  std::vector<double> e_area_, e_radius_;  ///< profile at the interior points
};

}  // namespace resotube::loss
