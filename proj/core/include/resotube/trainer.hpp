#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "resotube/losses.hpp"
#include "resotube/physics.hpp"
#include "resotube/resonet.hpp"

namespace resotube::train {

/// Optimization schedule. Full-batch: every epoch evaluates all
/// collocation points once and applies one Adam step.
struct TrainConfig {
  std::size_t epochs = 100000;
  double lr = 1e-3;
  /// Geometric per-epoch decay toward this rate at the final epoch;
  /// 0 keeps the rate constant (the default).
  double lr_final = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Identification only: the loss-constant slots receive zero gradient
  /// for this many leading epochs, so the networks fit the fields first.
  std::size_t freeze_epochs = 0;
  std::uint64_t seed = 1;  ///< recorded in results; sampling/init seeds derive from it upstream
  /// Checkpoint every N epochs to checkpoint_path (0 = off). The final
  /// state is also written when enabled.
  std::size_t checkpoint_interval = 0;
  std::filesystem::path checkpoint_path;
  /// Abort when the total loss exceeds this multiple of its initial value.
  double divergence_factor = 1e6;

  void validate() const;
};

/// Adam first/second moment buffers plus the step counter.
struct AdamState {
  std::vector<double> m, v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected elementwise Adam update, in place. Throws
/// NumericalError naming the first non-finite gradient slot.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               double lr, double beta1, double beta2, double eps);

/// Loss state at the start of an epoch, before that epoch's update.
struct EpochRecord {
  std::size_t epoch = 0;
  loss::LossBreakdown losses;
  double gc = 0.0, rc = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;  ///< one record per completed epoch
  loss::LossBreakdown final_losses;  ///< after the last update
  bool diverged = false;
  std::size_t epochs_run = 0;
  double runtime_seconds = 0.0;
};

struct IdentificationResult {
  double gc = 0.0, rc = 0.0;        ///< identified constants
  double gc_error = 0.0, rc_error = 0.0;  ///< signed relative error vs injected truth
  std::vector<EpochRecord> history;
  loss::LossBreakdown final_losses;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::size_t epochs_run = 0;
  double runtime_seconds = 0.0;
};

/// Minimizes the forward loss (no data term) over the network weights.
/// The loss-constant slots are held at their initial values for the whole
/// run: the forward problem assumes the constants are known.
TrainResult train_forward(nn::ResoNetModel& model, const loss::LossEngine& engine,
                          const TrainConfig& config);

/// Minimizes the inverse loss (with the data term) over the network
/// weights and, after the freeze window, the log-space loss constants.
/// `truth` is the injected ground truth used only for error reporting.
IdentificationResult identify(nn::ResoNetModel& model, const loss::LossEngine& engine,
                              const TrainConfig& config, const physics::LossConstants& truth);

}  // namespace resotube::train
