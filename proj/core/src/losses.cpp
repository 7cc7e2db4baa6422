#include "resotube/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>

#include "resotube/autodiff.hpp"

namespace resotube::loss {

namespace {

constexpr std::size_t kChunk = 64;  // points per forward/backward pass

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= double(base);
    r += f * double(i % base);
    i /= base;
  }
  return r;
}

double rotated(double u, double rot) {
  double v = u + rot;
  if (v >= 1.0) v -= 1.0;
  return v;
}

double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

}  // namespace

void CollocationConfig::validate() const {
  if (n_pde == 0 || n_bc == 0 || n_coupling == 0 || n_periodic == 0)
    throw std::invalid_argument("collocation: point counts must be positive");
}

CollocationSets CollocationSets::generate(const CollocationConfig& config, double length,
                                          double period) {
  config.validate();
  if (!(length > 0.0) || !(period > 0.0))
    throw std::invalid_argument("collocation: length and period must be positive");

  std::mt19937_64 rng(config.seed);
  const double rot_ex = uniform01(rng);
  const double rot_et = uniform01(rng);
  const double rot_b = uniform01(rng);
  const double rot_c = uniform01(rng);
  const double rot_p = uniform01(rng);

  CollocationSets s;
  s.length = length;
  s.period = period;
  s.e_x.resize(config.n_pde);
  s.e_t.resize(config.n_pde);
  for (std::size_t i = 0; i < config.n_pde; ++i) {
    s.e_x[i] = length * rotated(radical_inverse(i + 1, 2), rot_ex);
    s.e_t[i] = period * rotated(radical_inverse(i + 1, 3), rot_et);
  }
  s.b_t.resize(config.n_bc);
  for (std::size_t i = 0; i < config.n_bc; ++i)
    s.b_t[i] = period * rotated(radical_inverse(i + 1, 2), rot_b);
  s.c_t.resize(config.n_coupling);
  for (std::size_t i = 0; i < config.n_coupling; ++i)
    s.c_t[i] = period * rotated(radical_inverse(i + 1, 2), rot_c);
  s.p_x.resize(config.n_periodic);
  for (std::size_t i = 0; i < config.n_periodic; ++i)
    s.p_x[i] = length * rotated(radical_inverse(i + 1, 2), rot_p);
  return s;
}

void CollocationSets::attach_inlet_velocity(const excitation::PeriodicWaveform& velocity) {
  b_v.resize(b_t.size());
  for (std::size_t i = 0; i < b_t.size(); ++i) b_v[i] = velocity.sample(b_t[i]);
}

void CollocationSets::attach_pressure_data(const excitation::PeriodicWaveform& pressure,
                                           std::size_t n) {
  if (n == 0 || n > pressure.size())
    throw std::invalid_argument("collocation: data count must be in [1, sample count]");
  const std::size_t stride = pressure.size() / n;
  const double dt = period / double(pressure.size());
  m_t.resize(n);
  m_p.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m_t[i] = double(i * stride) * dt;
    m_p[i] = pressure.samples()[i * stride];
  }
}

LossWeights LossWeights::from_scales(const nn::ScalingSpec& scaling, double inlet_area) {
  scaling.validate();
  if (!(inlet_area > 0.0)) throw std::invalid_argument("weights: inlet area must be positive");
  const double l = scaling.x_scale, T = scaling.t_scale;
  const double ps = scaling.p_scale, Us = scaling.U_scale;
  LossWeights w;
  w.pde_continuity = (l / Us) * (l / Us);
  w.pde_momentum = (l / ps) * (l / ps);
  w.bc = (inlet_area / Us) * (inlet_area / Us);
  w.coupling = 1.0 / (ps * ps);
  w.periodic0_U = 1.0 / (Us * Us);
  w.periodic0_p = 1.0 / (ps * ps);
  w.periodic1_U = (T / Us) * (T / Us);
  w.periodic1_p = (T / ps) * (T / ps);
  w.data = 1.0 / (ps * ps);
  return w;
}

void LossWeights::validate() const {
  const double v[9] = {pde_continuity, pde_momentum, bc,          coupling, periodic0_U,
                       periodic0_p,    periodic1_U,  periodic1_p, data};
  for (double x : v)
    if (!std::isfinite(x) || x < 0.0)
      throw std::invalid_argument("weights: all must be finite and >= 0");
}

std::pair<double, double> pde_residual(const FieldPoint& f, double area, double radius,
                                       const physics::PhysicalConstants& consts, double gc,
                                       double rc) {
  const double G = physics::G_at(radius, gc);
  const double R = physics::R_at(radius, rc);
  const double r1 = f.dU_dx + G * f.p + (area / consts.K) * f.dp_dt;
  const double r2 = f.dp_dx + R * f.U + (consts.rho / area) * f.dU_dt;
  return {r1, r2};
}

LossEngine::LossEngine(geometry::TubeProfile tube, const physics::PhysicalConstants& constants,
                       CollocationSets sets, LossWeights weights)
    : tube_(std::move(tube)), constants_(constants), sets_(std::move(sets)), weights_(weights) {
  constants_.validate();
  weights_.validate();
  const double l = sets_.length, T = sets_.period;
  if (!(l > 0.0) || !(T > 0.0)) throw std::invalid_argument("loss: empty collocation domain");
  if (std::abs(tube_.length() - l) > 1e-12 * l)
    throw std::invalid_argument("loss: tube length disagrees with collocation domain");
  if (sets_.e_x.size() != sets_.e_t.size())
    throw std::invalid_argument("loss: interior coordinate arrays disagree");
  auto in_range = [](std::span<const double> v, double lo, double hi) {
    for (double x : v)
      if (!(x >= lo && x <= hi)) return false;
    return true;
  };
  if (!in_range(sets_.e_x, 0.0, l) || !in_range(sets_.p_x, 0.0, l))
    throw std::invalid_argument("loss: x coordinates outside the tube");
  if (!in_range(sets_.e_t, 0.0, T) || !in_range(sets_.b_t, 0.0, T) ||
      !in_range(sets_.c_t, 0.0, T) || !in_range(sets_.m_t, 0.0, T))
    throw std::invalid_argument("loss: t coordinates outside the period");
  if (!sets_.b_v.empty() && sets_.b_v.size() != sets_.b_t.size())
    throw std::invalid_argument("loss: inlet velocity data size disagrees with its points");
  if (sets_.m_p.size() != sets_.m_t.size())
    throw std::invalid_argument("loss: measurement data size disagrees with its points");

  area_inlet_ = tube_.area_at(0.0);
  radiation_ = physics::radiation_params(tube_.area_at(l), constants_);
  e_area_.resize(sets_.e_x.size());
  e_radius_.resize(sets_.e_x.size());
  for (std::size_t i = 0; i < sets_.e_x.size(); ++i) {
    e_area_[i] = tube_.area_at(sets_.e_x[i]);
    e_radius_[i] = tube_.radius_at(sets_.e_x[i]);
  }
}

void LossEngine::check_model(const nn::ResoNetModel& model) const {
  const auto& sc = model.scaling();
  if (sc.x_scale != sets_.length || sc.t_scale != sets_.period)
    throw std::invalid_argument("loss: model scaling disagrees with the collocation domain");
}

// The interior term drives the upper network with two tangent directions
// (unit seeds in scaled x and t); chain factors to physical units are
// applied when the residuals are assembled. Gradients for the two loss
// constants are accumulated analytically and chained into log-space.
double LossEngine::term_pde(const nn::ResoNetModel& model, std::span<double> grad) const {
  const std::size_t n = sets_.e_x.size();
  const auto& sc = model.scaling();
  const double l = sc.x_scale, T = sc.t_scale, ps = sc.p_scale, Us = sc.U_scale;
  const double gc = model.gc(), rc = model.rc();
  const double inv_n = 1.0 / double(n);
  const double lam1 = weights_.pde_continuity, lam2 = weights_.pde_momentum;

  double acc = 0.0, dL_dgc = 0.0, dL_drc = 0.0;
  ad::DenseProgram::Tape tape;
  for (std::size_t base = 0; base < n; base += kChunk) {
    const std::size_t m = std::min(kChunk, n - base);
    ad::Matrix x(2, m * 3);
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t c = 3 * j;
      x.at(0, c) = sets_.e_x[base + j] / l;
      x.at(1, c) = sets_.e_t[base + j] / T;
      x.at(0, c + 1) = 1.0;
      x.at(1, c + 1) = 0.0;
      x.at(0, c + 2) = 0.0;
      x.at(1, c + 2) = 1.0;
    }
    model.upper().forward(2, model.upper_params(), x, tape);
    const ad::Matrix& y = tape.mats.back();

    ad::Matrix ybar(2, m * 3);
    if (!grad.empty()) ybar.set_zero();
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t i = base + j, c = 3 * j;
      const double A = e_area_[i], r = e_radius_[i];
      FieldPoint f;
      f.x = sets_.e_x[i];
      f.p = ps * y.at(0, c);
      f.U = Us * y.at(1, c);
      f.dp_dx = ps / l * y.at(0, c + 1);
      f.dU_dx = Us / l * y.at(1, c + 1);
      f.dp_dt = ps / T * y.at(0, c + 2);
      f.dU_dt = Us / T * y.at(1, c + 2);
      const auto [r1, r2] = pde_residual(f, A, r, constants_, gc, rc);
      acc += (lam1 * r1 * r1 + lam2 * r2 * r2) * inv_n;
      if (grad.empty()) continue;
      const double w1 = 2.0 * lam1 * r1 * inv_n;
      const double w2 = 2.0 * lam2 * r2 * inv_n;
      ybar.at(0, c) = w1 * physics::G_at(r, gc) * ps;
      ybar.at(1, c) = w2 * physics::R_at(r, rc) * Us;
      ybar.at(0, c + 1) = w2 * ps / l;
      ybar.at(1, c + 1) = w1 * Us / l;
      ybar.at(0, c + 2) = w1 * (A / constants_.K) * ps / T;
      ybar.at(1, c + 2) = w2 * (constants_.rho / A) * Us / T;
      dL_dgc += w1 * r * f.p;           // dG/dGc = r
      dL_drc += w2 * f.U / (r * r * r); // dR/dRc = 1/r^3
    }
    if (!grad.empty())
      model.upper().backward(model.upper_params(), tape, ybar,
                             grad.subspan(model.upper_offset(), model.upper().param_count()));
  }
  if (!grad.empty()) {
    grad[model.gc_index()] += gc * dL_dgc;  // slots store logs
    grad[model.rc_index()] += rc * dL_drc;
  }
  return acc;
}

double LossEngine::term_bc(const nn::ResoNetModel& model, std::span<double> grad) const {
  const std::size_t n = sets_.b_t.size();
  if (n == 0 || weights_.bc == 0.0) return 0.0;
  if (sets_.b_v.empty())
    throw std::invalid_argument("loss: inlet velocity data not attached");
  const auto& sc = model.scaling();
  const double inv_n = 1.0 / double(n);
  const double gain = sc.U_scale / area_inlet_;

  double acc = 0.0;
  ad::DenseProgram::Tape tape;
  for (std::size_t base = 0; base < n; base += kChunk) {
    const std::size_t m = std::min(kChunk, n - base);
    ad::Matrix x(2, m);
    for (std::size_t j = 0; j < m; ++j) {
      x.at(0, j) = 0.0;
      x.at(1, j) = sets_.b_t[base + j] / sc.t_scale;
    }
    model.upper().forward(0, model.upper_params(), x, tape);
    const ad::Matrix& y = tape.mats.back();
    ad::Matrix ybar(2, m);
    if (!grad.empty()) ybar.set_zero();
    for (std::size_t j = 0; j < m; ++j) {
      const double res = gain * y.at(1, j) - sets_.b_v[base + j];
      acc += weights_.bc * res * res * inv_n;
      if (!grad.empty()) ybar.at(1, j) = 2.0 * weights_.bc * res * inv_n * gain;
    }
    if (!grad.empty())
      model.upper().backward(model.upper_params(), tape, ybar,
                             grad.subspan(model.upper_offset(), model.upper().param_count()));
  }
  return acc;
}

// Outlet term: the upper network supplies (p, U) at x = l (values only),
// the lower network supplies the radiated velocity and its time
// derivative (one tangent). Two residuals share one weight: the
// radiation ODE and the outlet pressure match.
double LossEngine::term_coupling(const nn::ResoNetModel& model, std::span<double> grad) const {
  const std::size_t n = sets_.c_t.size();
  if (n == 0 || weights_.coupling == 0.0) return 0.0;
  const auto& sc = model.scaling();
  const double T = sc.t_scale, ps = sc.p_scale, Us = sc.U_scale;
  const double Rr = radiation_.R_r, Lr = radiation_.L_r;
  const double inv_n = 1.0 / double(n);
  const double lam = weights_.coupling;

  double acc = 0.0;
  ad::DenseProgram::Tape tape_u, tape_l;
  for (std::size_t base = 0; base < n; base += kChunk) {
    const std::size_t m = std::min(kChunk, n - base);
    ad::Matrix xu(2, m);
    ad::Matrix xl(1, m * 2);
    for (std::size_t j = 0; j < m; ++j) {
      const double ts = sets_.c_t[base + j] / T;
      xu.at(0, j) = 1.0;
      xu.at(1, j) = ts;
      xl.at(0, 2 * j) = ts;
      xl.at(0, 2 * j + 1) = 1.0;
    }
    model.upper().forward(0, model.upper_params(), xu, tape_u);
    model.lower().forward(1, model.lower_params(), xl, tape_l);
    const ad::Matrix& yu = tape_u.mats.back();
    const ad::Matrix& yl = tape_l.mats.back();
    ad::Matrix ubar(2, m), lbar(1, m * 2);
    if (!grad.empty()) {
      ubar.set_zero();
      lbar.set_zero();
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double p = ps * yu.at(0, j);
      // cancel in raw units before scaling so a matched pair is exact
      const double dU = Us * (yu.at(1, j) - yl.at(0, 2 * j));
      const double dUr = Us / T * yl.at(0, 2 * j + 1);
      const double r1 = dU * Rr - Lr * dUr;
      const double r2 = p - dU * Rr;
      acc += lam * (r1 * r1 + r2 * r2) * inv_n;
      if (grad.empty()) continue;
      const double wa = 2.0 * lam * r1 * inv_n;
      const double wb = 2.0 * lam * r2 * inv_n;
      ubar.at(0, j) = wb * ps;
      ubar.at(1, j) = (wa - wb) * Rr * Us;
      lbar.at(0, 2 * j) = (wb - wa) * Rr * Us;
      lbar.at(0, 2 * j + 1) = -wa * Lr * Us / T;
    }
    if (!grad.empty()) {
      model.upper().backward(model.upper_params(), tape_u, ubar,
                             grad.subspan(model.upper_offset(), model.upper().param_count()));
      model.lower().backward(model.lower_params(), tape_l, lbar,
                             grad.subspan(model.lower_offset(), model.lower().param_count()));
    }
  }
  return acc;
}

// Steady-state term: values and time derivatives must agree at t = 0 and
// t = T for every station. Both evaluations ride in one batch; the pair
// contributes with opposite signs to the adjoint.
std::pair<double, double> LossEngine::term_periodicity(const nn::ResoNetModel& model,
                                                       std::span<double> grad) const {
  const std::size_t n = sets_.p_x.size();
  if (n == 0) return {0.0, 0.0};
  const auto& sc = model.scaling();
  const double l = sc.x_scale, T = sc.t_scale, ps = sc.p_scale, Us = sc.U_scale;
  const double inv_n = 1.0 / double(n);

  double acc0 = 0.0, acc1 = 0.0;
  ad::DenseProgram::Tape tape;
  const std::size_t half = kChunk / 2;  // two evaluations per station
  for (std::size_t base = 0; base < n; base += half) {
    const std::size_t m = std::min(half, n - base);
    ad::Matrix x(2, 2 * m * 2);
    for (std::size_t j = 0; j < m; ++j) {
      const double xs = sets_.p_x[base + j] / l;
      const std::size_t c = 4 * j;
      x.at(0, c) = xs;
      x.at(1, c) = 0.0;  // t = 0
      x.at(0, c + 1) = 0.0;
      x.at(1, c + 1) = 1.0;
      x.at(0, c + 2) = xs;
      x.at(1, c + 2) = 1.0;  // t = T
      x.at(0, c + 3) = 0.0;
      x.at(1, c + 3) = 1.0;
    }
    model.upper().forward(1, model.upper_params(), x, tape);
    const ad::Matrix& y = tape.mats.back();
    ad::Matrix ybar(2, 2 * m * 2);
    if (!grad.empty()) ybar.set_zero();
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t c = 4 * j;
      const double dp0 = ps * (y.at(0, c) - y.at(0, c + 2));
      const double dU0 = Us * (y.at(1, c) - y.at(1, c + 2));
      const double dp1 = ps / T * (y.at(0, c + 1) - y.at(0, c + 3));
      const double dU1 = Us / T * (y.at(1, c + 1) - y.at(1, c + 3));
      acc0 += (weights_.periodic0_p * dp0 * dp0 + weights_.periodic0_U * dU0 * dU0) * inv_n;
      acc1 += (weights_.periodic1_p * dp1 * dp1 + weights_.periodic1_U * dU1 * dU1) * inv_n;
      if (grad.empty()) continue;
      const double wp0 = 2.0 * weights_.periodic0_p * dp0 * inv_n * ps;
      const double wU0 = 2.0 * weights_.periodic0_U * dU0 * inv_n * Us;
      const double wp1 = 2.0 * weights_.periodic1_p * dp1 * inv_n * ps / T;
      const double wU1 = 2.0 * weights_.periodic1_U * dU1 * inv_n * Us / T;
      ybar.at(0, c) = wp0;
      ybar.at(1, c) = wU0;
      ybar.at(0, c + 1) = wp1;
      ybar.at(1, c + 1) = wU1;
      ybar.at(0, c + 2) = -wp0;
      ybar.at(1, c + 2) = -wU0;
      ybar.at(0, c + 3) = -wp1;
      ybar.at(1, c + 3) = -wU1;
    }
    if (!grad.empty())
      model.upper().backward(model.upper_params(), tape, ybar,
                             grad.subspan(model.upper_offset(), model.upper().param_count()));
  }
  return {acc0, acc1};
}

double LossEngine::term_data(const nn::ResoNetModel& model, std::span<double> grad) const {
  const std::size_t n = sets_.m_t.size();
  if (n == 0)
    throw std::invalid_argument("loss: inverse mode needs attached pressure measurements");
  if (weights_.data == 0.0) return 0.0;
  const auto& sc = model.scaling();
  const double inv_n = 1.0 / double(n);

  double acc = 0.0;
  ad::DenseProgram::Tape tape;
  for (std::size_t base = 0; base < n; base += kChunk) {
    const std::size_t m = std::min(kChunk, n - base);
    ad::Matrix x(2, m);
    for (std::size_t j = 0; j < m; ++j) {
      x.at(0, j) = 1.0;
      x.at(1, j) = sets_.m_t[base + j] / sc.t_scale;
    }
    model.upper().forward(0, model.upper_params(), x, tape);
    const ad::Matrix& y = tape.mats.back();
    ad::Matrix ybar(2, m);
    if (!grad.empty()) ybar.set_zero();
    for (std::size_t j = 0; j < m; ++j) {
      const double res = sc.p_scale * y.at(0, j) - sets_.m_p[base + j];
      acc += weights_.data * res * res * inv_n;
      if (!grad.empty()) ybar.at(0, j) = 2.0 * weights_.data * res * inv_n * sc.p_scale;
    }
    if (!grad.empty())
      model.upper().backward(model.upper_params(), tape, ybar,
                             grad.subspan(model.upper_offset(), model.upper().param_count()));
  }
  return acc;
}

LossBreakdown LossEngine::evaluate_impl(const nn::ResoNetModel& model, LossMode mode,
                                        std::span<double> grad) const {
  check_model(model);
  if (!grad.empty()) {
    if (grad.size() != model.params().size())
      throw std::invalid_argument("loss: gradient buffer size disagrees with the model");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  LossBreakdown b;
  b.pde = term_pde(model, grad);
  b.bc = term_bc(model, grad);
  b.coupling = term_coupling(model, grad);
  std::tie(b.periodic0, b.periodic1) = term_periodicity(model, grad);
  if (mode == LossMode::inverse) b.data = term_data(model, grad);
  b.total = b.pde + b.bc + b.coupling + b.periodic0 + b.periodic1 + b.data;
  return b;
}

LossBreakdown LossEngine::evaluate(const nn::ResoNetModel& model, LossMode mode) const {
  return evaluate_impl(model, mode, {});
}

LossBreakdown LossEngine::evaluate_with_grad(const nn::ResoNetModel& model, LossMode mode,
                                             std::span<double> grad) const {
  return evaluate_impl(model, mode, grad);
}

double LossEngine::pde_loss(const nn::ResoNetModel& model) const {
  check_model(model);
  return term_pde(model, {});
}

double LossEngine::bc_loss(const nn::ResoNetModel& model) const {
  check_model(model);
  return term_bc(model, {});
}

double LossEngine::coupling_loss(const nn::ResoNetModel& model) const {
  check_model(model);
  return term_coupling(model, {});
}

std::pair<double, double> LossEngine::periodicity_loss(const nn::ResoNetModel& model) const {
  check_model(model);
  return term_periodicity(model, {});
}

double LossEngine::data_loss(const nn::ResoNetModel& model) const {
  check_model(model);
  return term_data(model, {});
}

}  // namespace resotube::loss
