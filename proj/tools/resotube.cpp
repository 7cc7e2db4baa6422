// resotube: batch driver for the acoustic tube resonance experiments.
// One subcommand per experiment; every run writes its effective config,
// artifacts, and a manifest into --out, deterministically for a fixed seed.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "resotube/config.hpp"
#include "resotube/errors.hpp"
#include "resotube/io.hpp"
#include "resotube/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitConvergence = 4;

struct GlobalArgs {
  std::string config_path;
  std::string preset;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string error_json;
  bool quiet = false;
};

resotube::config::RunConfig effective_config(const GlobalArgs& args) {
  resotube::config::RunConfig cfg;
  if (!args.preset.empty()) resotube::config::apply_preset(cfg, args.preset);
  if (!args.config_path.empty()) cfg = resotube::config::load_file(args.config_path, cfg);
  if (args.seed) cfg.seed = *args.seed;
  return cfg;
}

void say(const GlobalArgs& args, const std::string& line) {
  if (!args.quiet) std::printf("%s\n", line.c_str());
}

std::string fmt(double v) { return resotube::io::format_double(v); }

void write_error_json(const GlobalArgs& args, const char* kind, const std::string& what,
                      int exit_code) {
  if (args.error_json.empty()) return;
  const nlohmann::json err = {{"error", what}, {"kind", kind}, {"exit_code", exit_code}};
  try {
    resotube::io::write_text(args.error_json, err.dump(2) + "\n");
  } catch (const std::exception&) {
    // the error report must never mask the original failure
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acoustic tube resonance: FDM oracle and PINN identification"};
  app.require_subcommand(1);

  GlobalArgs args;
  std::string reference_dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "key=value config file (see config.txt of any run)");
    cmd->add_option("--preset", args.preset, "paper (full scale) or desk (minutes scale)")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--out", args.out_dir, "output directory for this run")->required();
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--error-json", args.error_json, "on failure, write a machine-readable report here");
    cmd->add_flag("--quiet", args.quiet, "suppress progress output");
  };

  auto* gen = app.add_subcommand("gen-excitation", "write one period of the inlet velocity");
  add_common(gen);
  auto* fdm = app.add_subcommand("fdm-forward", "finite-difference reference solution");
  add_common(fdm);
  auto* fwd = app.add_subcommand("pinn-forward", "train the networks with known loss constants");
  add_common(fwd);
  fwd->add_option("--reference", reference_dir,
                  "fdm-forward run directory to compare the outlet pressure against");
  auto* ident = app.add_subcommand("identify", "recover the loss constants from outlet pressure");
  add_common(ident);
  auto* sens = app.add_subcommand("sensitivity", "outlet response to doubling G_c or R_c");
  add_common(sens);
  auto* grad = app.add_subcommand("gradcheck", "finite-difference audit of the loss gradients");
  add_common(grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const auto cfg = effective_config(args);

    if (gen->parsed()) {
      const auto s = resotube::pipeline::run_gen_excitation(cfg, args.out_dir);
      say(args, "excitation: " + std::to_string(s.samples) + " samples, " +
                    std::to_string(s.harmonics) + " harmonics, max |v| = " + fmt(s.max_abs));
    } else if (fdm->parsed()) {
      const auto s = resotube::pipeline::run_fdm(cfg, args.out_dir);
      say(args, "fdm: cfl " + fmt(s.cfl) + ", steady after " + std::to_string(s.periods) +
                    " periods (residual " + fmt(s.residual) + "), max |p_l| = " +
                    fmt(s.max_abs_p_l) + " Pa");
    } else if (fwd->parsed()) {
      std::optional<std::filesystem::path> ref;
      if (!reference_dir.empty()) ref = reference_dir;
      const auto s = resotube::pipeline::run_pinn_forward(cfg, args.out_dir, ref);
      say(args, "forward: total loss " + fmt(s.final_losses.total) + " after " +
                    std::to_string(s.epochs_run) + " epochs (" + fmt(s.runtime_seconds) + " s)");
      if (s.rel_l2) say(args, "forward: outlet pressure rel L2 vs reference = " + fmt(*s.rel_l2));
      if (s.diverged) {
        write_error_json(args, "numerical", "training diverged", kExitNumerical);
        std::fprintf(stderr, "error: training diverged\n");
        return kExitNumerical;
      }
    } else if (ident->parsed()) {
      const auto r = resotube::pipeline::run_identify(cfg, args.out_dir);
      say(args, "identified: gc " + fmt(r.gc) + " (" + fmt(100.0 * r.gc_error) + "% off), rc " +
                    fmt(r.rc) + " (" + fmt(100.0 * r.rc_error) + "% off) in " +
                    fmt(r.runtime_seconds) + " s");
      if (r.diverged) {
        write_error_json(args, "numerical", "training diverged", kExitNumerical);
        std::fprintf(stderr, "error: training diverged\n");
        return kExitNumerical;
      }
    } else if (sens->parsed()) {
      const auto s = resotube::pipeline::run_sensitivity(cfg, args.out_dir);
      say(args, "sensitivity: dev(2*gc) = " + fmt(s.dev_gc) + ", dev(2*rc) = " + fmt(s.dev_rc) +
                    ", ratio = " + fmt(s.ratio));
    } else if (grad->parsed()) {
      const auto r = resotube::pipeline::run_gradcheck(cfg, args.out_dir);
      for (const auto& t : r.terms)
        say(args, "gradcheck " + t.name + ": max rel error " + fmt(t.max_rel_error) + " over " +
                      std::to_string(t.slots_checked) + " slots");
      if (!r.pass) {
        write_error_json(args, "numerical", "gradient check exceeded threshold", kExitNumerical);
        std::fprintf(stderr, "error: gradient check failed (threshold %s)\n",
                     fmt(r.threshold).c_str());
        return kExitNumerical;
      }
      say(args, "gradcheck: pass");
    }
  } catch (const resotube::ConfigError& e) {
    write_error_json(args, "config", e.what(), kExitConfig);
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const resotube::ConvergenceError& e) {
    write_error_json(args, "convergence", e.what(), kExitConvergence);
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConvergence;
  } catch (const resotube::NumericalError& e) {
    write_error_json(args, "numerical", e.what(), kExitNumerical);
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    write_error_json(args, "config", e.what(), kExitConfig);
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
