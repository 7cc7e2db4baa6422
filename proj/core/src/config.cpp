#include "resotube/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <vector>

#include "resotube/errors.hpp"
#include "resotube/io.hpp"

namespace resotube::config {

namespace {

double parse_f64(std::string_view s) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw ConfigError("bad floating-point value '" + std::string(s) + "'");
  return v;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw ConfigError("bad unsigned integer value '" + std::string(s) + "'");
  return v;
}

struct Entry {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

// the key string doubles as the member path, which keeps schema and struct
// from drifting apart
#define F64(field)                                                          \
  Entry {                                                                   \
    #field, [](const RunConfig& c) { return io::format_double(c.field); },  \
        [](RunConfig& c, std::string_view s) { c.field = parse_f64(s); }    \
  }
#define U64(field)                                                          \
  Entry {                                                                   \
    #field, [](const RunConfig& c) { return std::to_string(c.field); },     \
        [](RunConfig& c, std::string_view s) { c.field = parse_u64(s); }    \
  }
#define I32(field)                                                          \
  Entry {                                                                   \
    #field, [](const RunConfig& c) { return std::to_string(c.field); },     \
        [](RunConfig& c, std::string_view s) {                              \
          c.field = static_cast<int>(parse_u64(s));                         \
        }                                                                   \
  }

const std::vector<Entry>& schema() {
  static const std::vector<Entry> entries = {
      U64(seed),
      F64(constants.rho),
      F64(constants.K),
      F64(constants.c),
      F64(constants.mu),
      F64(constants.eta),
      F64(constants.lambda_th),
      F64(constants.c_p),
      F64(constants.omega_c),
      F64(loss_constants.G_c),
      F64(loss_constants.R_c),
      F64(tube.length),
      F64(tube.d1),
      F64(tube.d2),
      F64(excitation.f0),
      F64(excitation.amplitude),
      F64(excitation.oq),
      F64(excitation.cq),
      F64(excitation.cutoff),
      U64(excitation_samples),
      F64(fdm.dx),
      F64(fdm.dt),
      I32(fdm.periods_max),
      F64(fdm.steady_tol),
      U64(network.width),
      U64(network.blocks),
      F64(network.p_scale),
      F64(network.U_scale),
      F64(network.t_init_gain),
      U64(collocation.n_pde),
      U64(collocation.n_bc),
      U64(collocation.n_coupling),
      U64(collocation.n_periodic),
      U64(n_data),
      F64(weights.pde_continuity),
      F64(weights.pde_momentum),
      F64(weights.bc),
      F64(weights.coupling),
      F64(weights.periodic0_U),
      F64(weights.periodic0_p),
      F64(weights.periodic1_U),
      F64(weights.periodic1_p),
      F64(weights.data),
      U64(train.epochs),
      F64(train.lr),
      F64(train.lr_final),
      F64(train.beta1),
      F64(train.beta2),
      F64(train.eps),
      U64(train.freeze_epochs),
      U64(train.checkpoint_interval),
      F64(train.divergence_factor),
      F64(identify.noise_level),
      F64(identify.gc_init_factor),
      F64(identify.rc_init_factor),
  };
  return entries;
}

#undef F64
#undef U64
#undef I32

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

void apply_key_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& e : schema()) {
    if (key == e.key) {
      try {
        e.set(cfg, value);
      } catch (const ConfigError& err) {
        throw ConfigError(std::string(key) + ": " + err.what());
      }
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig load_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open config file");
  std::string line;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_key_value(base, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const ConfigError& err) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + err.what());
    }
  }
  return base;
}

std::string serialize(const RunConfig& cfg) {
  std::string out = "# resotube run configuration (dotted key = value; '#' comments)\n";
  for (const auto& e : schema()) {
    out += e.key;
    out += " = ";
    out += e.get(cfg);
    out += '\n';
  }
  return out;
}

void apply_preset(RunConfig& cfg, std::string_view name) {
  if (name == "paper") {
    cfg.network.width = 200;
    cfg.network.blocks = 5;
    cfg.train.epochs = 100000;
    cfg.train.freeze_epochs = 10000;
    cfg.collocation.n_pde = 5000;
    cfg.collocation.n_bc = 1000;
    cfg.collocation.n_coupling = 1000;
    cfg.collocation.n_periodic = 1000;
    cfg.n_data = 256;
  } else if (name == "desk") {
    cfg.network.width = 64;
    cfg.network.blocks = 3;
    cfg.train.epochs = 20000;
    cfg.train.freeze_epochs = 2000;
    // short runs cannot afford the late-phase Adam noise a constant rate
    // leaves behind; decay buys roughly an order of magnitude on the loss
    cfg.train.lr_final = 2e-5;
    cfg.collocation.n_pde = 2000;
    cfg.collocation.n_bc = 500;
    cfg.collocation.n_coupling = 500;
    cfg.collocation.n_periodic = 500;
    cfg.n_data = 128;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected paper or desk)");
  }
}

void RunConfig::validate() const {
  auto fail = [](const char* what) { throw ConfigError(what); };
  try {
    constants.validate();
    excitation.validate();
    collocation.validate();
    weights.validate();
    auto tc = make_train(*this);
    if (tc.checkpoint_interval > 0) tc.checkpoint_path = "placeholder";  // runs inject the real path
    tc.validate();
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  if (!(loss_constants.G_c > 0.0) || !(loss_constants.R_c > 0.0))
    fail("loss_constants must be positive");
  if (!(tube.length > 0.0) || !(tube.d1 > 0.0) || !(tube.d2 > 0.0))
    fail("tube dimensions must be positive");
  if (excitation_samples < 16) fail("excitation_samples must be >= 16");
  if (!(fdm.dx > 0.0) || !(fdm.dt > 0.0)) fail("fdm steps must be positive");
  if (fdm.periods_max < 1) fail("fdm.periods_max must be >= 1");
  if (!(fdm.steady_tol > 0.0)) fail("fdm.steady_tol must be positive");
  if (network.width < 1 || network.blocks < 1) fail("network size must be >= 1");
  if (!(network.p_scale > 0.0) || !(network.U_scale > 0.0))
    fail("network scales must be positive");
  if (!(network.t_init_gain > 0.0)) fail("network.t_init_gain must be positive");
  if (n_data < 1) fail("n_data must be >= 1");
  if (!(identify.noise_level >= 0.0)) fail("identify.noise_level must be >= 0");
  if (!(identify.gc_init_factor > 0.0) || !(identify.rc_init_factor > 0.0))
    fail("identify init factors must be positive");
}

geometry::TubeProfile make_tube(const RunConfig& cfg) {
  return geometry::TubeProfile::two_section(cfg.tube.length, cfg.tube.d1, cfg.tube.d2);
}

excitation::PeriodicWaveform make_excitation(const RunConfig& cfg) {
  return excitation::make_rosenberg(cfg.excitation, cfg.excitation_samples);
}

nn::ScalingSpec make_scaling(const RunConfig& cfg) {
  return {.x_scale = cfg.tube.length,
          .t_scale = 1.0 / cfg.excitation.f0,
          .p_scale = cfg.network.p_scale,
          .U_scale = cfg.network.U_scale};
}

nn::NetworkConfig make_network(const RunConfig& cfg) {
  return {.width = cfg.network.width, .blocks = cfg.network.blocks, .seed = cfg.seed,
          .t_init_gain = cfg.network.t_init_gain};
}

loss::CollocationConfig make_collocation(const RunConfig& cfg) {
  auto cc = cfg.collocation;
  cc.seed = cfg.seed;
  return cc;
}

loss::LossWeights make_weights(const RunConfig& cfg) {
  const auto base = loss::LossWeights::from_scales(make_scaling(cfg), make_tube(cfg).area_at(0.0));
  loss::LossWeights w = cfg.weights;
  w.pde_continuity *= base.pde_continuity;
  w.pde_momentum *= base.pde_momentum;
  w.bc *= base.bc;
  w.coupling *= base.coupling;
  w.periodic0_U *= base.periodic0_U;
  w.periodic0_p *= base.periodic0_p;
  w.periodic1_U *= base.periodic1_U;
  w.periodic1_p *= base.periodic1_p;
  w.data *= base.data;
  return w;
}

train::TrainConfig make_train(const RunConfig& cfg) {
  train::TrainConfig tc;
  tc.epochs = cfg.train.epochs;
  tc.lr = cfg.train.lr;
  tc.lr_final = cfg.train.lr_final;
  tc.beta1 = cfg.train.beta1;
  tc.beta2 = cfg.train.beta2;
  tc.eps = cfg.train.eps;
  tc.freeze_epochs = cfg.train.freeze_epochs;
  tc.seed = cfg.seed;
  tc.checkpoint_interval = cfg.train.checkpoint_interval;
  tc.divergence_factor = cfg.train.divergence_factor;
  return tc;
}

}  // namespace resotube::config
