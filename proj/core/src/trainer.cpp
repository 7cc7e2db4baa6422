#include "resotube/trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "resotube/errors.hpp"

namespace resotube::train {

void TrainConfig::validate() const {
  if (epochs < 1)
    throw std::invalid_argument("train config: epochs must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw std::invalid_argument("train config: lr must be positive and finite");
  if (!(lr_final >= 0.0) || !std::isfinite(lr_final) || lr_final > lr)
    throw std::invalid_argument("train config: lr_final must be in [0, lr]");
  if (!(beta1 > 0.0 && beta1 < 1.0))
    throw std::invalid_argument("train config: beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0))
    throw std::invalid_argument("train config: beta2 must be in (0, 1)");
  if (!(eps > 0.0))
    throw std::invalid_argument("train config: eps must be positive");
  if (freeze_epochs >= epochs)
    throw std::invalid_argument("train config: freeze_epochs must be < epochs");
  if (!(divergence_factor > 1.0))
    throw std::invalid_argument("train config: divergence_factor must be > 1");
  if (checkpoint_interval > 0 && checkpoint_path.empty())
    throw std::invalid_argument("train config: checkpoint_interval needs a checkpoint_path");
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.m.size() != n || state.v.size() != n)
    throw std::invalid_argument("adam_step: buffer size mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(grad[i]))
      throw NumericalError("adam_step: non-finite gradient at slot " + std::to_string(i) +
                           " (step " + std::to_string(state.step + 1) + ")");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

namespace {

struct RunOutcome {
  std::vector<EpochRecord> history;
  loss::LossBreakdown final_losses;
  bool diverged = false;
  std::size_t epochs_run = 0;
  double runtime_seconds = 0.0;
};

/// Shared epoch loop. `freeze_epochs` epochs at the front get zero gradient
/// on the log(G_c)/log(R_c) slots; pass config.epochs to pin them for the
/// whole run.
RunOutcome run_epochs(nn::ResoNetModel& model, const loss::LossEngine& engine,
                      const TrainConfig& config, loss::LossMode mode,
                      std::size_t freeze_epochs) {
  config.validate();
  auto params = model.params();
  AdamState state(params.size());
  std::vector<double> grad(params.size(), 0.0);

  RunOutcome out;
  out.history.reserve(config.epochs);
  const auto t0 = std::chrono::steady_clock::now();
  double initial_total = 0.0;

  // geometric decay lr -> lr_final across the run; 1.0 when disabled
  const double decay = (config.lr_final > 0.0 && config.epochs > 1)
                           ? std::pow(config.lr_final / config.lr,
                                      1.0 / static_cast<double>(config.epochs - 1))
                           : 1.0;
  double lr = config.lr;

  for (std::size_t e = 0; e < config.epochs; ++e) {
    const auto bd = engine.evaluate_with_grad(model, mode, grad);
    out.history.push_back({e, bd, model.gc(), model.rc()});
    if (e == 0) initial_total = bd.total;
    if (!std::isfinite(bd.total) || bd.total > config.divergence_factor * initial_total) {
      out.diverged = true;
      break;
    }
    if (e < freeze_epochs) {
      grad[model.gc_index()] = 0.0;
      grad[model.rc_index()] = 0.0;
    }
    adam_step(params, grad, state, lr, config.beta1, config.beta2, config.eps);
    lr *= decay;
    if (config.checkpoint_interval > 0 && (e + 1) % config.checkpoint_interval == 0)
      model.save_checkpoint(config.checkpoint_path);
  }

  out.epochs_run = out.history.size();
  out.final_losses = engine.evaluate(model, mode);
  if (config.checkpoint_interval > 0) model.save_checkpoint(config.checkpoint_path);
  out.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace

TrainResult train_forward(nn::ResoNetModel& model, const loss::LossEngine& engine,
                          const TrainConfig& config) {
  auto out = run_epochs(model, engine, config, loss::LossMode::forward_only, config.epochs);
  TrainResult res;
  res.history = std::move(out.history);
  res.final_losses = out.final_losses;
  res.diverged = out.diverged;
  res.epochs_run = out.epochs_run;
  res.runtime_seconds = out.runtime_seconds;
  return res;
}

IdentificationResult identify(nn::ResoNetModel& model, const loss::LossEngine& engine,
                              const TrainConfig& config,
                              const physics::LossConstants& truth) {
  if (!(truth.G_c > 0.0) || !(truth.R_c > 0.0))
    throw std::invalid_argument("identify: injected truth must be positive");
  auto out = run_epochs(model, engine, config, loss::LossMode::inverse, config.freeze_epochs);

  IdentificationResult res;
  res.gc = model.gc();
  res.rc = model.rc();
  res.gc_error = (res.gc - truth.G_c) / truth.G_c;
  res.rc_error = (res.rc - truth.R_c) / truth.R_c;
  res.history = std::move(out.history);
  res.final_losses = out.final_losses;
  res.seed = config.seed;
  res.diverged = out.diverged;
  res.epochs_run = out.epochs_run;
  res.runtime_seconds = out.runtime_seconds;
  return res;
}

}  // namespace resotube::train
