#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace resotube::ad {

/// Dense column-major matrix. The engine packs a batch of n points into
/// n*(K+1) columns: column p*(K+1) holds point p's value, columns
/// p*(K+1)+1 .. p*(K+1)+K hold its K directional tangents. All engine
/// entry points follow this packing.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& at(std::size_t r, std::size_t c) { return a_[c * rows_ + r]; }
  double at(std::size_t r, std::size_t c) const { return a_[c * rows_ + r]; }
  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }
  double* col(std::size_t c) { return a_.data() + c * rows_; }
  const double* col(std::size_t c) const { return a_.data() + c * rows_; }
  void set_zero() { a_.assign(a_.size(), 0.0); }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

/// Snake activation a + sin^2(a) and its first two derivatives; the PINN
/// literature favors it because it is analytic and periodic-friendly.
inline double snake(double a) noexcept {
  const double s = std::sin(a);
  return a + s * s;
}
inline double snake_d1(double a) noexcept { return 1.0 + std::sin(2.0 * a); }
inline double snake_d2(double a) noexcept { return 2.0 * std::cos(2.0 * a); }

/// Named extents that partition a flat trainable array.
class ParameterLayout {
 public:
  struct Segment {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  ParameterLayout() = default;
  /// Segments are laid out in order; names must be unique and nonempty.
  explicit ParameterLayout(std::vector<std::pair<std::string, std::size_t>> extents);

  std::size_t total() const { return total_; }
  const std::vector<Segment>& segments() const { return segments_; }
  /// Throws std::invalid_argument for unknown names.
  const Segment& segment(std::string_view name) const;
  bool has(std::string_view name) const;

 private:
  std::vector<Segment> segments_;
  std::size_t total_ = 0;
};

/// Flat float64 trainables bound to a layout.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::shared_ptr<const ParameterLayout> layout);

  const ParameterLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParameterLayout> layout_ptr() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> segment(std::string_view name);
  std::span<const double> segment(std::string_view name) const;

  /// Throws NumericalError naming the first non-finite slot.
  void check_finite() const;

 private:
  std::shared_ptr<const ParameterLayout> layout_;
  std::vector<double> values_;
};

/// Feed-forward program over a hidden state matrix: linear layers, snake
/// activations, and identity skip connections expressed as save/add pairs.
/// Parameters live in an external flat array; the program stores offsets
/// relative to its own base.
class DenseProgram {
 public:
  enum class OpKind : std::uint8_t { linear, snake, skip_save, skip_add };
  struct Op {
    OpKind kind = OpKind::snake;
    std::size_t in_dim = 0, out_dim = 0; // linear only
    std::size_t w_offset = 0, b_offset = 0;
    std::size_t save_slot = 0; // skip pairing
  };

  /// Builds a program op by op. Parameter offsets are assigned in call
  /// order: each linear(out) claims out*in weights (row-major, row =
  /// output) then out biases.
  class Builder {
   public:
    explicit Builder(std::string name, std::size_t in_dim);
    Builder& linear(std::size_t out_dim);
    Builder& snake();
    Builder& skip_save();
    Builder& skip_add();
    /// skip_save .. skip_add nesting must be balanced and closed.
    /// Consumes the builder.
    DenseProgram build();

   private:
    std::string name_;
    std::size_t in_dim_ = 0, cur_dim_ = 0;
    std::size_t next_offset_ = 0;
    std::vector<Op> ops_;
    std::vector<std::size_t> open_saves_;
    std::vector<std::size_t> save_dims_;
    std::size_t n_linear_ = 0;
  };

  const std::string& name() const { return name_; }
  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  std::size_t param_count() const { return param_count_; }
  std::size_t save_slots() const { return save_slots_; }
  const std::vector<Op>& ops() const { return ops_; }
  /// (name, size) extents of this program's parameters, in offset order;
  /// names are "<program>.<layer>.w" / ".b".
  const std::vector<std::pair<std::string, std::size_t>>& extents() const { return extents_; }

  /// Forward sweep record: input of every op plus the final output, in
  /// the packed column layout. Replaying (re-running forward on the same
  /// inputs and parameters) reproduces it bit-identically.
  struct Tape {
    int k_tangents = 0;
    std::size_t n_points = 0;
    std::vector<Matrix> mats; // mats[i] = input of op i; mats.back() = output
  };

  /// K = number of tangent directions carried per point (0, 1 or 2).
  /// `x` must be in_dim x n*(K+1). Throws NumericalError naming the op
  /// that produced a non-finite value.
  void forward(int K, std::span<const double> params, const Matrix& x, Tape& tape) const;

  /// Reverse sweep. `ybar` is the adjoint of the output in the same
  /// packed layout; gradients accumulate into `grad` (size param_count).
  /// `xbar`, when given, receives the adjoint of the program input.
  void backward(std::span<const double> params, const Tape& tape, const Matrix& ybar,
                std::span<double> grad, Matrix* xbar = nullptr) const;

 private:
  std::string name_;
  std::size_t in_dim_ = 0, out_dim_ = 0, param_count_ = 0, save_slots_ = 0;
  std::vector<Op> ops_;
  std::vector<std::pair<std::string, std::size_t>> extents_;
};

/// Result of one finite-difference spot check of an analytic gradient.
struct FdCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;
  double step = 0.0;
};

/// Central-difference validation of `analytic_grad` on `sample_count`
/// coordinates drawn without replacement (seeded). Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as the denominator so near-zero
/// components do not dominate. step must be > 0.
FdCheckReport finite_difference_check(std::span<const double> params,
                                      const std::function<double(std::span<const double>)>& loss,
                                      std::span<const double> analytic_grad, double step,
                                      std::size_t sample_count, std::uint64_t seed);

} // namespace resotube::ad
