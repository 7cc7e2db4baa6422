#include "resotube/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <random>
#include <stdexcept>

#include "resotube/errors.hpp"

namespace resotube::ad {

namespace {

using EMap = Eigen::Map<Eigen::MatrixXd>;
using ECMap = Eigen::Map<const Eigen::MatrixXd>;
using ERowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ERowMap = Eigen::Map<ERowMat>;
using ERowCMap = Eigen::Map<const ERowMat>;
using EVecMap = Eigen::Map<Eigen::VectorXd>;
using EVecCMap = Eigen::Map<const Eigen::VectorXd>;

EMap map(Matrix& m) { return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())}; }
ECMap map(const Matrix& m) { return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())}; }

const char* kind_name(DenseProgram::OpKind k) {
  switch (k) {
    case DenseProgram::OpKind::linear: return "linear";
    case DenseProgram::OpKind::snake: return "snake";
    case DenseProgram::OpKind::skip_save: return "skip_save";
    case DenseProgram::OpKind::skip_add: return "skip_add";
  }
  return "?";
}

} // namespace

ParameterLayout::ParameterLayout(std::vector<std::pair<std::string, std::size_t>> extents) {
  segments_.reserve(extents.size());
  for (auto& [name, size] : extents) {
    if (name.empty()) throw std::invalid_argument("parameter layout: empty segment name");
    if (size == 0) throw std::invalid_argument("parameter layout: zero-size segment " + name);
    if (has(name)) throw std::invalid_argument("parameter layout: duplicate segment " + name);
    segments_.push_back({std::move(name), total_, size});
    total_ += size;
  }
}

const ParameterLayout::Segment& ParameterLayout::segment(std::string_view name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s;
  throw std::invalid_argument("parameter layout: unknown segment " + std::string(name));
}

bool ParameterLayout::has(std::string_view name) const {
  for (const auto& s : segments_)
    if (s.name == name) return true;
  return false;
}

ParameterVector::ParameterVector(std::shared_ptr<const ParameterLayout> layout)
    : layout_(std::move(layout)) {
  if (!layout_) throw std::invalid_argument("parameter vector: null layout");
  values_.assign(layout_->total(), 0.0);
}

std::span<double> ParameterVector::segment(std::string_view name) {
  const auto& s = layout_->segment(name);
  return {values_.data() + s.offset, s.size};
}

std::span<const double> ParameterVector::segment(std::string_view name) const {
  const auto& s = layout_->segment(name);
  return {values_.data() + s.offset, s.size};
}

void ParameterVector::check_finite() const {
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (!std::isfinite(values_[i]))
      throw NumericalError("parameter vector: non-finite value at slot " + std::to_string(i));
}

DenseProgram::Builder::Builder(std::string name, std::size_t in_dim)
    : name_(std::move(name)), in_dim_(in_dim), cur_dim_(in_dim) {
  if (in_dim_ == 0) throw std::invalid_argument("program builder: zero input dimension");
}

DenseProgram::Builder& DenseProgram::Builder::linear(std::size_t out_dim) {
  if (out_dim == 0) throw std::invalid_argument("program builder: zero layer width");
  Op op;
  op.kind = OpKind::linear;
  op.in_dim = cur_dim_;
  op.out_dim = out_dim;
  op.w_offset = next_offset_;
  op.b_offset = next_offset_ + cur_dim_ * out_dim;
  ops_.push_back(op);
  next_offset_ += cur_dim_ * out_dim + out_dim;
  cur_dim_ = out_dim;
  ++n_linear_;
  return *this;
}

DenseProgram::Builder& DenseProgram::Builder::snake() {
  ops_.push_back({OpKind::snake});
  return *this;
}

DenseProgram::Builder& DenseProgram::Builder::skip_save() {
  Op op;
  op.kind = OpKind::skip_save;
  op.save_slot = save_dims_.size();
  open_saves_.push_back(op.save_slot);
  save_dims_.push_back(cur_dim_);
  ops_.push_back(op);
  return *this;
}

DenseProgram::Builder& DenseProgram::Builder::skip_add() {
  if (open_saves_.empty()) throw std::invalid_argument("program builder: skip_add without skip_save");
  const std::size_t slot = open_saves_.back();
  open_saves_.pop_back();
  if (save_dims_[slot] != cur_dim_)
    throw std::invalid_argument("program builder: skip branch width mismatch");
  Op op;
  op.kind = OpKind::skip_add;
  op.save_slot = slot;
  ops_.push_back(op);
  return *this;
}

DenseProgram DenseProgram::Builder::build() {
  if (!open_saves_.empty()) throw std::invalid_argument("program builder: unclosed skip_save");
  if (ops_.empty()) throw std::invalid_argument("program builder: empty program");
  DenseProgram p;
  p.name_ = std::move(name_);
  p.in_dim_ = in_dim_;
  p.out_dim_ = cur_dim_;
  p.param_count_ = next_offset_;
  p.save_slots_ = save_dims_.size();
  p.ops_ = std::move(ops_);
  std::size_t layer = 0;
  for (const auto& op : p.ops_) {
    if (op.kind != OpKind::linear) continue;
    const std::string base = p.name_ + ".L" + std::to_string(layer++);
    p.extents_.emplace_back(base + ".w", op.in_dim * op.out_dim);
    p.extents_.emplace_back(base + ".b", op.out_dim);
  }
  return p;
}

void DenseProgram::forward(int K, std::span<const double> params, const Matrix& x,
                           Tape& tape) const {
  if (K < 0 || K > 2) throw std::invalid_argument("autodiff: tangent count must be 0, 1 or 2");
  if (params.size() < param_count_) throw std::invalid_argument("autodiff: parameter span too small");
  if (x.rows() != in_dim_ || x.cols() % static_cast<std::size_t>(K + 1) != 0 || x.cols() == 0)
    throw std::invalid_argument("autodiff: input shape mismatch in " + name_);

  const std::size_t stride = static_cast<std::size_t>(K + 1);
  const std::size_t n = x.cols() / stride;
  tape.k_tangents = K;
  tape.n_points = n;
  tape.mats.clear();
  tape.mats.reserve(ops_.size() + 1);
  tape.mats.push_back(x);

  std::vector<std::size_t> save_stack;
  std::vector<std::size_t> slot_to_mat(save_slots_, 0);

  for (std::size_t i = 0; i < ops_.size(); ++i) {
    const Op& op = ops_[i];
    const Matrix& in = tape.mats.back();
    Matrix out;
    switch (op.kind) {
      case OpKind::linear: {
        out = Matrix(op.out_dim, in.cols());
        ERowCMap W(params.data() + op.w_offset, static_cast<Eigen::Index>(op.out_dim),
                   static_cast<Eigen::Index>(op.in_dim));
        EVecCMap b(params.data() + op.b_offset, static_cast<Eigen::Index>(op.out_dim));
        map(out).noalias() = W * map(in);
        auto m = map(out);
        for (std::size_t p = 0; p < n; ++p)
          m.col(static_cast<Eigen::Index>(p * stride)) += b;
        break;
      }
      case OpKind::snake: {
        out = Matrix(in.rows(), in.cols());
        auto mi = map(in);
        auto mo = map(out);
        for (std::size_t p = 0; p < n; ++p) {
          const auto c = static_cast<Eigen::Index>(p * stride);
          const auto v = mi.col(c).array();
          mo.col(c).array() = v + v.sin().square();
          if (K > 0) {
            const auto d1 = 1.0 + (2.0 * v).sin();
            for (int k = 1; k <= K; ++k) mo.col(c + k).array() = d1 * mi.col(c + k).array();
          }
        }
        break;
      }
      case OpKind::skip_save: {
        out = in;
        slot_to_mat[op.save_slot] = i; // tape index of the saved value
        break;
      }
      case OpKind::skip_add: {
        out = in;
        map(out) += map(tape.mats[slot_to_mat[op.save_slot]]);
        break;
      }
    }
    if (!map(out).allFinite())
      throw NumericalError("autodiff: non-finite value after op " + std::to_string(i) + " (" +
                           kind_name(op.kind) + ") in program " + name_);
    tape.mats.push_back(std::move(out));
  }
}

void DenseProgram::backward(std::span<const double> params, const Tape& tape, const Matrix& ybar,
                            std::span<double> grad, Matrix* xbar) const {
  if (grad.size() < param_count_) throw std::invalid_argument("autodiff: gradient span too small");
  if (tape.mats.size() != ops_.size() + 1)
    throw std::invalid_argument("autodiff: tape does not match program " + name_);
  const Matrix& y = tape.mats.back();
  if (ybar.rows() != y.rows() || ybar.cols() != y.cols())
    throw std::invalid_argument("autodiff: output adjoint shape mismatch in " + name_);

  const int K = tape.k_tangents;
  const std::size_t stride = static_cast<std::size_t>(K + 1);
  const std::size_t n = tape.n_points;

  // forward pass again over the op list to find each save's tape index
  std::vector<std::size_t> slot_to_mat(save_slots_, 0);
  for (std::size_t i = 0; i < ops_.size(); ++i)
    if (ops_[i].kind == OpKind::skip_save) slot_to_mat[ops_[i].save_slot] = i;

  Matrix hbar = ybar;
  std::vector<Matrix> branch_adjoints(save_slots_);

  for (std::size_t ri = ops_.size(); ri-- > 0;) {
    const Op& op = ops_[ri];
    const Matrix& in = tape.mats[ri];
    switch (op.kind) {
      case OpKind::linear: {
        ERowCMap W(params.data() + op.w_offset, static_cast<Eigen::Index>(op.out_dim),
                   static_cast<Eigen::Index>(op.in_dim));
        ERowMap Wbar(grad.data() + op.w_offset, static_cast<Eigen::Index>(op.out_dim),
                     static_cast<Eigen::Index>(op.in_dim));
        EVecMap bbar(grad.data() + op.b_offset, static_cast<Eigen::Index>(op.out_dim));
        Wbar.noalias() += map(hbar) * map(in).transpose();
        auto hb = map(hbar);
        for (std::size_t p = 0; p < n; ++p)
          bbar += hb.col(static_cast<Eigen::Index>(p * stride));
        Matrix next(op.in_dim, in.cols());
        map(next).noalias() = W.transpose() * map(hbar);
        hbar = std::move(next);
        break;
      }
      case OpKind::snake: {
        Matrix next(in.rows(), in.cols());
        auto mi = map(in);
        auto mh = map(hbar);
        auto mn = map(next);
        for (std::size_t p = 0; p < n; ++p) {
          const auto c = static_cast<Eigen::Index>(p * stride);
          const auto v = mi.col(c).array();
          const auto d1 = 1.0 + (2.0 * v).sin();
          mn.col(c).array() = mh.col(c).array() * d1;
          if (K > 0) {
            const auto d2 = 2.0 * (2.0 * v).cos();
            for (int k = 1; k <= K; ++k) {
              mn.col(c).array() += mh.col(c + k).array() * d2 * mi.col(c + k).array();
              mn.col(c + k).array() = mh.col(c + k).array() * d1;
            }
          }
        }
        hbar = std::move(next);
        break;
      }
      case OpKind::skip_add: {
        branch_adjoints[op.save_slot] = hbar; // copy flows into the saved branch
        break;
      }
      case OpKind::skip_save: {
        map(hbar) += map(branch_adjoints[op.save_slot]);
        branch_adjoints[op.save_slot] = Matrix();
        break;
      }
    }
  }
  if (xbar != nullptr) *xbar = std::move(hbar);
}

FdCheckReport finite_difference_check(std::span<const double> params,
                                      const std::function<double(std::span<const double>)>& loss,
                                      std::span<const double> analytic_grad, double step,
                                      std::size_t sample_count, std::uint64_t seed) {
  if (step <= 0.0) throw std::invalid_argument("finite_difference_check: step must be positive");
  if (analytic_grad.size() != params.size())
    throw std::invalid_argument("finite_difference_check: gradient size mismatch");
  if (params.empty()) throw std::invalid_argument("finite_difference_check: empty parameters");

  std::vector<std::size_t> picks;
  if (sample_count >= params.size()) {
    picks.resize(params.size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
  } else {
    // partial Fisher-Yates over an index pool
    std::vector<std::size_t> pool(params.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    std::mt19937_64 rng(seed);
    picks.reserve(sample_count);
    for (std::size_t i = 0; i < sample_count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      picks.push_back(pool[i]);
    }
  }

  std::vector<double> work(params.begin(), params.end());
  FdCheckReport rep;
  rep.step = step;
  rep.checked = picks.size();
  for (const std::size_t idx : picks) {
    const double keep = work[idx];
    work[idx] = keep + step;
    const double fp = loss(work);
    work[idx] = keep - step;
    const double fm = loss(work);
    work[idx] = keep;
    const double numeric = (fp - fm) / (2.0 * step);
    const double analytic = analytic_grad[idx];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    const double rel = std::abs(numeric - analytic) / denom;
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = idx;
      rep.analytic_at_worst = analytic;
      rep.numeric_at_worst = numeric;
    }
  }
  return rep;
}

} // namespace resotube::ad
