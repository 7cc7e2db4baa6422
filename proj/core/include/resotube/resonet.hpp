#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "resotube/autodiff.hpp"

namespace resotube::nn {

/// Architecture knobs shared by both subnetworks.
struct NetworkConfig {
  std::size_t width = 200;  ///< nodes per hidden layer
  std::size_t blocks = 5;   ///< residual FC blocks per subnetwork
  std::uint64_t seed = 1;   ///< weight initialization seed
  /// Multiplier on the first layer's time-input weights at init. Plain
  /// LeCun (gain 1) starts the net blind to the upper excitation
  /// harmonics; a gain near the number of harmonics in the band removes
  /// that spectral bias. Has no effect on loaded checkpoints.
  double t_init_gain = 1.0;

  /// Throws std::invalid_argument unless width >= 1, blocks >= 1 and
  /// t_init_gain is finite and > 0.
  void validate() const;
};

/// Input/output normalization. Inputs are divided by (x_scale, t_scale)
/// so the networks see [0,1]^2; raw outputs are multiplied by p_scale /
/// U_scale to recover physical units. Typically x_scale = tube length,
/// t_scale = excitation period, p_scale = max |measured pressure|,
/// U_scale = inlet area times max |particle velocity|.
struct ScalingSpec {
  double x_scale = 1.0;  ///< m
  double t_scale = 1.0;  ///< s
  double p_scale = 1.0;  ///< Pa
  double U_scale = 1.0;  ///< m^3/s

  /// Throws std::invalid_argument unless all scales are finite and > 0.
  void validate() const;
};

/// Two-network model for tube resonance: the upper network maps scaled
/// (x,t) to scaled (p_hat, U_hat); the lower network maps scaled t to the
/// scaled radiated volume velocity Ur_hat at the open end. Both are
/// residual stacks of [linear -> snake -> linear] blocks with an input
/// embedding and a linear head. The two loss constants ride along as
/// trainable slots, stored in log-space so they stay positive no matter
/// what the optimizer does.
///
/// All parameters live in one flat vector laid out as
///   [upper tensors..., lower tensors..., gc_log, rc_log]
/// which is what the trainer optimizes and checkpoints persist.
class ResoNetModel {
 public:
  /// Builds both programs and initializes weights: LeCun normal
  /// N(0, 1/fan_in) per linear layer, biases zero, deterministic under
  /// config.seed. gc_init / rc_init seed the loss-constant slots.
  ResoNetModel(const NetworkConfig& config, const ScalingSpec& scaling, double gc_init,
               double rc_init);

  /// Parameters of one subnetwork: embed (in->w), `blocks` FC blocks
  /// (two w->w linears each), head (w->out), plus biases.
  static std::size_t dense_param_count(std::size_t in, std::size_t out, std::size_t width,
                                       std::size_t blocks);
  /// Full flat size including the two loss-constant slots. The
  /// constructor asserts the built programs agree with this.
  static std::size_t expected_param_count(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }
  const ScalingSpec& scaling() const { return scaling_; }
  const ad::DenseProgram& upper() const { return *upper_; }
  const ad::DenseProgram& lower() const { return *lower_; }

  std::span<double> params() { return params_.values(); }
  std::span<const double> params() const { return params_.values(); }
  const ad::ParameterLayout& layout() const { return params_.layout(); }

  /// Views into the flat vector, for driving the programs directly.
  std::span<const double> upper_params() const;
  std::span<const double> lower_params() const;
  std::size_t upper_offset() const { return 0; }
  std::size_t lower_offset() const { return upper_->param_count(); }
  std::size_t gc_index() const { return params_.size() - 2; }
  std::size_t rc_index() const { return params_.size() - 1; }

  /// Loss constants in physical units (the slots store logs).
  double gc() const;
  double rc() const;
  void set_gc(double gc);
  void set_rc(double rc);

  /// Single-point evaluation in physical units. Throws std::domain_error
  /// outside 0 <= x <= x_scale, 0 <= t <= t_scale.
  std::pair<double, double> forward_pU(double x, double t) const;
  double forward_Ur(double t) const;

  /// Checkpoint: "RTCK1\n" magic, u64 LE header length, JSON header
  /// (config + scaling + parameter count), float64 LE parameter payload.
  void save_checkpoint(const std::filesystem::path& path) const;
  static ResoNetModel load_checkpoint(const std::filesystem::path& path);

 private:
  NetworkConfig config_;
  ScalingSpec scaling_;
  std::shared_ptr<const ad::DenseProgram> upper_;
  std::shared_ptr<const ad::DenseProgram> lower_;
  ad::ParameterVector params_;
};

}  // namespace resotube::nn
