#include "resotube/fdm.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "resotube/errors.hpp"

namespace resotube::fdm {

namespace {

std::size_t cells_for(double length, double dx) {
  return static_cast<std::size_t>(std::llround(length / dx));
}

} // namespace

void FdmConfig::validate(double tube_length, double sound_speed, double dt_adjusted) const {
  if (dx <= 0.0 || dt <= 0.0) throw std::invalid_argument("fdm: dx and dt must be positive");
  if (periods_max < 1) throw std::invalid_argument("fdm: periods_max must be at least 1");
  if (steady_tol < 0.0) throw std::invalid_argument("fdm: steady_tol must be nonnegative");
  const auto cells = cells_for(tube_length, dx);
  if (cells < 4 || std::abs(static_cast<double>(cells) * dx - tube_length) > 1e-6 * tube_length)
    throw std::invalid_argument("fdm: dx must divide the tube length into at least 4 cells");
  const double cfl = sound_speed * dt_adjusted / dx;
  if (!(cfl < 1.0))
    throw std::invalid_argument("fdm: CFL " + std::to_string(cfl) + " is not below 1");
}

Solver::Solver(const FdmConfig& config, const geometry::TubeProfile& profile,
               const physics::PhysicalConstants& consts, const physics::LossConstants& loss,
               const excitation::PeriodicWaveform* inlet) {
  consts.validate();
  if (loss.G_c < 0.0 || loss.R_c < 0.0)
    throw std::invalid_argument("fdm: loss constants must be nonnegative");

  dx_ = config.dx;
  dt_ = config.dt;
  nt_ = 0;
  if (inlet != nullptr) {
    const double period = inlet->period();
    nt_ = static_cast<std::size_t>(std::llround(period / config.dt));
    if (nt_ < 16) throw std::invalid_argument("fdm: fewer than 16 steps per period");
    dt_ = period / static_cast<double>(nt_);
  }
  config.validate(profile.length(), consts.c, dt_);
  cfl_ = consts.c * dt_ / dx_;
  outlet_ = config.outlet;
  K_ = consts.K;
  rho_ = consts.rho;

  nx_ = cells_for(profile.length(), dx_) + 1;
  area_.resize(nx_);
  g_loss_.resize(nx_);
  r_loss_.resize(nx_);
  cp_keep_.resize(nx_);
  cp_dux_.resize(nx_);
  cu_keep_.resize(nx_);
  cu_dpx_.resize(nx_);
  for (std::size_t i = 0; i < nx_; ++i) {
    const double x = std::min(static_cast<double>(i) * dx_, profile.length());
    const double r = 0.5 * profile.diameter_at(x);
    const double A = profile.area_at(x);
    area_[i] = A;
    const double G = physics::G_at(r, loss.G_c);
    const double R = physics::R_at(r, loss.R_c);
    g_loss_[i] = G;
    r_loss_[i] = R;
    const double alpha = A / (2.0 * consts.K * dt_);
    const double beta = consts.rho / (2.0 * A * dt_);
    cp_keep_[i] = (alpha - 0.5 * G) / (alpha + 0.5 * G);
    cp_dux_[i] = 1.0 / ((alpha + 0.5 * G) * 2.0 * dx_);
    cu_keep_[i] = (beta - 0.5 * R) / (beta + 0.5 * R);
    cu_dpx_[i] = 1.0 / ((beta + 0.5 * R) * 2.0 * dx_);
  }

  const auto rad = physics::radiation_params(area_.back(), consts);
  Rr_ = rad.R_r;
  Lr_ = rad.L_r;
  rad_k_ = dt_ * Rr_ / (2.0 * Lr_);

  if (inlet != nullptr) {
    exc_.resize(nt_);
    const double A0 = area_.front();
    for (std::size_t k = 0; k < nt_; ++k)
      exc_[k] = A0 * inlet->sample(static_cast<double>(k) * dt_);
  }

  p_prev_.assign(nx_, 0.0);
  p_now_.assign(nx_, 0.0);
  p_next_.assign(nx_, 0.0);
  U_prev_.assign(nx_, 0.0);
  U_now_.assign(nx_, 0.0);
  U_next_.assign(nx_, 0.0);
  if (!exc_.empty()) {
    U_prev_[0] = exc_[0];
    U_now_[0] = exc_[0];
  }
}

void Solver::set_initial_state(std::span<const double> p, std::span<const double> U) {
  if (p.size() != nx_ || U.size() != nx_)
    throw std::invalid_argument("fdm: initial state size mismatch");
  std::copy(p.begin(), p.end(), p_now_.begin());
  std::copy(U.begin(), U.end(), U_now_.begin());
  // Seed the n-1 level by first-order backward extrapolation through the
  // governing equations; copying the fields verbatim leaves an O(dt)
  // inconsistency that rings in the leapfrog parasite mode.
  const std::size_t e = nx_ - 1;
  auto ddx = [this, e](std::span<const double> f, std::size_t i) {
    if (i == 0) return (f[1] - f[0]) / dx_;
    if (i == e) return (f[e] - f[e - 1]) / dx_;
    return (f[i + 1] - f[i - 1]) / (2.0 * dx_);
  };
  for (std::size_t i = 0; i < nx_; ++i) {
    p_prev_[i] = p[i] + dt_ * (K_ / area_[i]) * (ddx(U, i) + g_loss_[i] * p[i]);
    U_prev_[i] = U[i] + dt_ * (area_[i] / rho_) * (ddx(p, i) + r_loss_[i] * U[i]);
  }
  Ur_now_ = 0.0;
  n_ = 0;
}

void Solver::step() {
  const std::size_t e = nx_ - 1;

  for (std::size_t i = 1; i < e; ++i)
    p_next_[i] = cp_keep_[i] * p_prev_[i] - cp_dux_[i] * (U_now_[i + 1] - U_now_[i - 1]);
  for (std::size_t i = 1; i < e; ++i)
    U_next_[i] = cu_keep_[i] * U_prev_[i] - cu_dpx_[i] * (p_now_[i + 1] - p_now_[i - 1]);

  // Boundary rows use the first-order one-sided difference over dx. Together
  // with the half-weight trapezoidal energy norm this is the standard
  // summation-by-parts closure of the interior centered operator; wider
  // one-sided stencils here feed energy into the leapfrog mode and blow up
  // after a few thousand steps.

  // Inlet: forced flow, pressure from the continuity equation.
  U_next_[0] = exc_.empty() ? 0.0 : exc_[static_cast<std::size_t>(n_ + 1) % nt_];
  p_next_[0] = cp_keep_[0] * p_prev_[0] - cp_dux_[0] * 2.0 * (U_now_[1] - U_now_[0]);

  // Outlet: flow from the momentum equation, then the radiation load fixes
  // the pressure. The load is stiff (R_r over the one-sided gradient gives
  // a loop gain near 1/2), so the outlet pressure enters its own update at
  // the new level; the scalar solve below keeps the closure explicit in
  // everything else and unconditionally damped.
  if (outlet_ == OutletModel::radiation) {
    const double Ur_free = ((1.0 - rad_k_) * Ur_now_ + rad_k_ * U_now_[e]) / (1.0 + rad_k_);
    const double Ur_gain = rad_k_ / (1.0 + rad_k_);
    // U_next[e] = cu_keep U_prev[e] - cu_dpx 2 (p_next[e] - p_now[e-1]),
    // p_next[e] = R_r (U_next[e] - Ur_free - Ur_gain U_next[e])
    const double g = cu_dpx_[e] * 2.0 * Rr_ * (1.0 - Ur_gain);
    const double rhs = cu_keep_[e] * U_prev_[e] +
                       cu_dpx_[e] * 2.0 * (p_now_[e - 1] + Rr_ * Ur_free);
    U_next_[e] = rhs / (1.0 + g);
    const double Ur_next = Ur_free + Ur_gain * U_next_[e];
    p_next_[e] = (U_next_[e] - Ur_next) * Rr_;
    Ur_now_ = Ur_next;
  } else {
    U_next_[e] = 0.0;
    p_next_[e] = cp_keep_[e] * p_prev_[e] - cp_dux_[e] * 2.0 * (U_now_[e] - U_now_[e - 1]);
  }

  double probe = p_next_[0] + p_next_[e / 2] + p_next_[e] + U_next_[e / 2];
  if (!std::isfinite(probe))
    throw NumericalError("fdm: state diverged at step " + std::to_string(n_ + 1));

  std::swap(p_prev_, p_now_);
  std::swap(p_now_, p_next_);
  std::swap(U_prev_, U_now_);
  std::swap(U_now_, U_next_);
  ++n_;
}

double Solver::energy() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < nx_; ++i) {
    const double w = (i == 0 || i == nx_ - 1) ? 0.5 : 1.0;
    sum += w * (area_[i] * p_now_[i] * p_now_[i] / (2.0 * K_) +
                rho_ * U_now_[i] * U_now_[i] / (2.0 * area_[i]));
  }
  return sum * dx_;
}

FdmSolution run_to_steady_state(const FdmConfig& config, const geometry::TubeProfile& profile,
                                const physics::PhysicalConstants& consts,
                                const physics::LossConstants& loss,
                                const excitation::PeriodicWaveform& inlet) {
  Solver solver(config, profile, consts, loss, &inlet);
  const std::size_t nx = solver.node_count();
  const std::size_t nt = solver.steps_per_period();

  FdmSolution out;
  out.dx = solver.dx();
  out.dt = solver.dt();
  out.nx = nx;
  out.nt = nt;
  out.cfl = solver.cfl();
  out.p.assign(nt * nx, 0.0);
  out.U.assign(nt * nx, 0.0);
  out.Ur.assign(nt, 0.0);

  std::vector<double> pl_prev(nt, 0.0), pl_now(nt, 0.0);
  for (int m = 0; m < config.periods_max; ++m) {
    for (std::size_t k = 0; k < nt; ++k) {
      std::copy(solver.p().begin(), solver.p().end(), out.p.begin() + static_cast<std::ptrdiff_t>(k * nx));
      std::copy(solver.U().begin(), solver.U().end(), out.U.begin() + static_cast<std::ptrdiff_t>(k * nx));
      out.Ur[k] = solver.Ur();
      pl_now[k] = out.p[k * nx + nx - 1];
      solver.step();
    }
    out.periods = m + 1;
    if (m > 0) {
      double dmax = 0.0, ref = 0.0;
      for (std::size_t k = 0; k < nt; ++k) {
        dmax = std::max(dmax, std::abs(pl_now[k] - pl_prev[k]));
        ref = std::max(ref, std::abs(pl_now[k]));
      }
      out.residual = ref > 0.0 ? dmax / ref : (dmax > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      if (out.residual <= config.steady_tol) {
        out.converged = true;
        break;
      }
    }
    std::swap(pl_prev, pl_now);
  }

  std::vector<double> u0(nt);
  for (std::size_t k = 0; k < nt; ++k) u0[k] = out.U[k * nx];
  out.p_l.emplace(inlet.f0(), pl_now);
  out.U_0.emplace(inlet.f0(), u0);
  return out;
}

SensitivityResult sensitivity_study(const FdmConfig& config, const geometry::TubeProfile& profile,
                                    const physics::PhysicalConstants& consts,
                                    const physics::LossConstants& baseline,
                                    const excitation::PeriodicWaveform& inlet) {
  SensitivityResult res;
  res.baseline = run_to_steady_state(config, profile, consts, baseline, inlet);
  res.g_doubled = run_to_steady_state(config, profile, consts,
                                      {2.0 * baseline.G_c, baseline.R_c}, inlet);
  res.r_doubled = run_to_steady_state(config, profile, consts,
                                      {baseline.G_c, 2.0 * baseline.R_c}, inlet);
  res.dev_g = relative_l2(*res.g_doubled.p_l, *res.baseline.p_l);
  res.dev_r = relative_l2(*res.r_doubled.p_l, *res.baseline.p_l);
  res.ratio = res.dev_r > 0.0 ? res.dev_g / res.dev_r : std::numeric_limits<double>::infinity();
  return res;
}

excitation::PeriodicWaveform add_noise(const excitation::PeriodicWaveform& w, double level,
                                       std::uint64_t seed) {
  if (level < 0.0) throw std::invalid_argument("fdm: noise level must be nonnegative");
  std::vector<double> samples(w.samples().begin(), w.samples().end());
  if (level > 0.0) {
    const double sigma = level * w.stddev();
    std::mt19937_64 rng(seed);
    auto uniform01 = [&rng]() {
      return (static_cast<double>(rng() >> 11) + 1.0) * 0x1p-53; // (0, 1]
    };
    bool have_spare = false;
    double spare = 0.0;
    for (double& s : samples) {
      double z;
      if (have_spare) {
        z = spare;
        have_spare = false;
      } else {
        const double mag = std::sqrt(-2.0 * std::log(uniform01()));
        const double ang = 2.0 * std::numbers::pi * uniform01();
        z = mag * std::cos(ang);
        spare = mag * std::sin(ang);
        have_spare = true;
      }
      s += sigma * z;
    }
  }
  return excitation::PeriodicWaveform(w.f0(), samples);
}

double relative_l2(const excitation::PeriodicWaveform& w, const excitation::PeriodicWaveform& ref) {
  const auto& hw = w.harmonics();
  const auto& hr = ref.harmonics();
  const std::size_t n = std::max(hw.size(), hr.size());
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double aw = k < hw.size() ? hw[k].a : 0.0;
    const double bw = k < hw.size() ? hw[k].b : 0.0;
    const double ar = k < hr.size() ? hr[k].a : 0.0;
    const double br = k < hr.size() ? hr[k].b : 0.0;
    const double scale = (k == 0) ? 1.0 : 0.5; // mean-square weight per harmonic
    num += scale * ((aw - ar) * (aw - ar) + (bw - br) * (bw - br));
    den += scale * (ar * ar + br * br);
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

} // namespace resotube::fdm
