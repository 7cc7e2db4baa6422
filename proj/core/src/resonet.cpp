#include "resotube/resonet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace resotube::nn {

namespace {

ad::DenseProgram build_program(std::string name, std::size_t in, std::size_t out,
                               const NetworkConfig& cfg) {
  ad::DenseProgram::Builder b(std::move(name), in);
  b.linear(cfg.width);  // input embedding
  for (std::size_t i = 0; i < cfg.blocks; ++i)
    b.skip_save().linear(cfg.width).snake().linear(cfg.width).skip_add();
  b.linear(out);  // head
  return b.build();
}

void init_lecun_normal(const ad::DenseProgram& prog, std::span<double> params,
                       std::mt19937_64& rng) {
  for (const auto& op : prog.ops()) {
    if (op.kind != ad::DenseProgram::OpKind::linear) continue;
    std::normal_distribution<double> draw(0.0, 1.0 / std::sqrt(double(op.in_dim)));
    for (std::size_t i = 0; i < op.out_dim * op.in_dim; ++i) params[op.w_offset + i] = draw(rng);
    // biases stay zero
  }
}

void write_u64_le(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = char((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

std::uint64_t read_u64_le(std::istream& is) {
  char buf[8];
  is.read(buf, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

constexpr char kMagic[6] = {'R', 'T', 'C', 'K', '1', '\n'};

}  // namespace

void NetworkConfig::validate() const {
  if (width < 1) throw std::invalid_argument("network: width must be >= 1");
  if (blocks < 1) throw std::invalid_argument("network: blocks must be >= 1");
  if (!std::isfinite(t_init_gain) || t_init_gain <= 0.0)
    throw std::invalid_argument("network: t_init_gain must be finite and > 0");
}

void ScalingSpec::validate() const {
  const double s[4] = {x_scale, t_scale, p_scale, U_scale};
  const char* n[4] = {"x_scale", "t_scale", "p_scale", "U_scale"};
  for (int i = 0; i < 4; ++i)
    if (!std::isfinite(s[i]) || s[i] <= 0.0)
      throw std::invalid_argument(std::string("scaling: ") + n[i] + " must be finite and > 0");
}

std::size_t ResoNetModel::dense_param_count(std::size_t in, std::size_t out, std::size_t width,
                                            std::size_t blocks) {
  const std::size_t embed = in * width + width;
  const std::size_t block = 2 * (width * width + width);
  const std::size_t head = width * out + out;
  return embed + blocks * block + head;
}

std::size_t ResoNetModel::expected_param_count(const NetworkConfig& config) {
  return dense_param_count(2, 2, config.width, config.blocks) +
         dense_param_count(1, 1, config.width, config.blocks) + 2;
}

ResoNetModel::ResoNetModel(const NetworkConfig& config, const ScalingSpec& scaling, double gc_init,
                           double rc_init)
    : config_(config), scaling_(scaling) {
  config_.validate();
  scaling_.validate();
  if (!std::isfinite(gc_init) || gc_init <= 0.0)
    throw std::invalid_argument("network: gc_init must be finite and > 0");
  if (!std::isfinite(rc_init) || rc_init <= 0.0)
    throw std::invalid_argument("network: rc_init must be finite and > 0");

  upper_ = std::make_shared<ad::DenseProgram>(build_program("upper", 2, 2, config_));
  lower_ = std::make_shared<ad::DenseProgram>(build_program("lower", 1, 1, config_));

  auto extents = upper_->extents();
  extents.insert(extents.end(), lower_->extents().begin(), lower_->extents().end());
  extents.emplace_back("gc_log", 1);
  extents.emplace_back("rc_log", 1);
  params_ = ad::ParameterVector(std::make_shared<ad::ParameterLayout>(std::move(extents)));
  if (params_.size() != expected_param_count(config_))
    throw std::logic_error("network: parameter layout disagrees with the documented count");

  std::mt19937_64 rng(config_.seed);
  init_lecun_normal(*upper_, params_.values(), rng);
  init_lecun_normal(*lower_, params_.values().subspan(lower_offset()), rng);
  if (config_.t_init_gain != 1.0) {
    // widen only the embed layer's time column; the draw order above is
    // untouched so the seed contract holds
    auto widen = [&](const ad::DenseProgram& prog, std::span<double> p, std::size_t t_col) {
      const auto& embed = prog.ops().front();
      for (std::size_t r = 0; r < embed.out_dim; ++r)
        p[embed.w_offset + r * embed.in_dim + t_col] *= config_.t_init_gain;
    };
    widen(*upper_, params_.values(), 1);
    widen(*lower_, params_.values().subspan(lower_offset()), 0);
  }
  set_gc(gc_init);
  set_rc(rc_init);
}

std::span<const double> ResoNetModel::upper_params() const {
  return params_.values().subspan(upper_offset(), upper_->param_count());
}

std::span<const double> ResoNetModel::lower_params() const {
  return params_.values().subspan(lower_offset(), lower_->param_count());
}

double ResoNetModel::gc() const { return std::exp(params_.values()[gc_index()]); }
double ResoNetModel::rc() const { return std::exp(params_.values()[rc_index()]); }

void ResoNetModel::set_gc(double gc) {
  if (!std::isfinite(gc) || gc <= 0.0)
    throw std::invalid_argument("network: Gc must be finite and > 0");
  params_.values()[gc_index()] = std::log(gc);
}

void ResoNetModel::set_rc(double rc) {
  if (!std::isfinite(rc) || rc <= 0.0)
    throw std::invalid_argument("network: Rc must be finite and > 0");
  params_.values()[rc_index()] = std::log(rc);
}

std::pair<double, double> ResoNetModel::forward_pU(double x, double t) const {
  if (!(x >= 0.0 && x <= scaling_.x_scale))
    throw std::domain_error("network: x outside [0, x_scale]");
  if (!(t >= 0.0 && t <= scaling_.t_scale))
    throw std::domain_error("network: t outside [0, t_scale]");
  ad::Matrix in(2, 1);
  in.at(0, 0) = x / scaling_.x_scale;
  in.at(1, 0) = t / scaling_.t_scale;
  ad::DenseProgram::Tape tape;
  upper_->forward(0, upper_params(), in, tape);
  const ad::Matrix& y = tape.mats.back();
  return {y.at(0, 0) * scaling_.p_scale, y.at(1, 0) * scaling_.U_scale};
}

double ResoNetModel::forward_Ur(double t) const {
  if (!(t >= 0.0 && t <= scaling_.t_scale))
    throw std::domain_error("network: t outside [0, t_scale]");
  ad::Matrix in(1, 1);
  in.at(0, 0) = t / scaling_.t_scale;
  ad::DenseProgram::Tape tape;
  lower_->forward(0, lower_params(), in, tape);
  return tape.mats.back().at(0, 0) * scaling_.U_scale;
}

void ResoNetModel::save_checkpoint(const std::filesystem::path& path) const {
  nlohmann::json header = {
      {"format", "RTCK1"},
      {"width", config_.width},
      {"blocks", config_.blocks},
      {"seed", config_.seed},
      {"t_init_gain", config_.t_init_gain},
      {"scaling",
       {{"x_scale", scaling_.x_scale},
        {"t_scale", scaling_.t_scale},
        {"p_scale", scaling_.p_scale},
        {"U_scale", scaling_.U_scale}}},
      {"param_count", params_.size()},
  };
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_u64_le(os, text.size());
  os.write(text.data(), std::streamsize(text.size()));
  for (double v : params_.values()) write_u64_le(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

ResoNetModel ResoNetModel::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[6];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const std::uint64_t header_len = read_u64_le(is);
  if (!is || header_len > (1u << 20))
    throw std::runtime_error("checkpoint: implausible header length in " + path.string());
  std::string text(header_len, '\0');
  is.read(text.data(), std::streamsize(header_len));
  if (!is) throw std::runtime_error("checkpoint: truncated header in " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: invalid header JSON in " + path.string() + ": " +
                             e.what());
  }
  if (header.value("format", "") != std::string("RTCK1"))
    throw std::runtime_error("checkpoint: unsupported format in " + path.string());

  NetworkConfig cfg;
  cfg.width = header.at("width").get<std::size_t>();
  cfg.blocks = header.at("blocks").get<std::size_t>();
  cfg.seed = header.at("seed").get<std::uint64_t>();
  cfg.t_init_gain = header.at("t_init_gain").get<double>();
  ScalingSpec sc;
  const auto& js = header.at("scaling");
  sc.x_scale = js.at("x_scale").get<double>();
  sc.t_scale = js.at("t_scale").get<double>();
  sc.p_scale = js.at("p_scale").get<double>();
  sc.U_scale = js.at("U_scale").get<double>();

  ResoNetModel model(cfg, sc, 1.0, 1.0);
  const std::size_t count = header.at("param_count").get<std::size_t>();
  if (count != model.params().size())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path.string());
  for (double& v : model.params()) v = std::bit_cast<double>(read_u64_le(is));
  if (!is) throw std::runtime_error("checkpoint: truncated payload in " + path.string());
  return model;
}

}  // namespace resotube::nn
