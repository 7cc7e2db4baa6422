#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "resotube/config.hpp"
#include "resotube/fdm.hpp"
#include "resotube/losses.hpp"
#include "resotube/trainer.hpp"

namespace resotube::pipeline {

/// Each run_* writes its artifacts plus config.txt and manifest.json into
/// `out` (created if needed) and returns the headline numbers. All outputs
/// are deterministic functions of the config, so rerunning a command in a
/// fresh directory reproduces every file byte for byte.

struct ExcitationSummary {
  std::size_t samples = 0;
  std::size_t harmonics = 0;  ///< bands above DC kept by the low-pass
  double max_abs = 0.0;
};

ExcitationSummary run_gen_excitation(const config::RunConfig& cfg,
                                     const std::filesystem::path& out);

struct FdmSummary {
  double cfl = 0.0;
  std::size_t nx = 0, nt = 0;
  double dx = 0.0, dt = 0.0;
  int periods = 0;
  double residual = 0.0;
  bool converged = false;
  double max_abs_p_l = 0.0;
};

FdmSummary run_fdm(const config::RunConfig& cfg, const std::filesystem::path& out);

struct ForwardSummary {
  loss::LossBreakdown final_losses;
  std::size_t epochs_run = 0;
  bool diverged = false;
  double runtime_seconds = 0.0;
  /// Present when a reference FDM run was given: relative L2 distance of
  /// the predicted outlet pressure from the reference waveform.
  std::optional<double> rel_l2;
};

ForwardSummary run_pinn_forward(const config::RunConfig& cfg, const std::filesystem::path& out,
                                const std::optional<std::filesystem::path>& reference_fdm_dir);

train::IdentificationResult run_identify(const config::RunConfig& cfg,
                                         const std::filesystem::path& out);

struct SensitivitySummary {
  double dev_gc = 0.0;  ///< relative L2 change of p(l,.) under G_c -> 2 G_c
  double dev_rc = 0.0;  ///< same under R_c -> 2 R_c
  double ratio = 0.0;   ///< dev_gc / dev_rc
};

SensitivitySummary run_sensitivity(const config::RunConfig& cfg,
                                   const std::filesystem::path& out);

struct GradcheckTerm {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t slots_checked = 0;
};

struct GradcheckReport {
  std::vector<GradcheckTerm> terms;
  double threshold = 1e-5;
  bool pass = false;
};

/// Central finite differences vs the analytic gradient on a compact model
/// (width 16), per loss term and for the full inverse loss. The two
/// log-constant slots are always included in the sample.
GradcheckReport run_gradcheck(const config::RunConfig& cfg, const std::filesystem::path& out);

}  // namespace resotube::pipeline
