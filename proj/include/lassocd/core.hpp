#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace lassocd {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Loss { L1, L2 };
enum class Direction { Forward, Backward };

const char* to_string(Loss loss);
const char* to_string(Direction direction);

/// Identifies either the intercept or a slope coefficient. Slots are laid out
/// as 0 = intercept, k + 1 = beta_k, which is also the layout of every
/// per-coordinate table in the solvers.
class CoordinateId {
 public:
  static constexpr CoordinateId intercept() { return CoordinateId(0); }
  static constexpr CoordinateId beta(Index k) { return CoordinateId(k + 1); }
  static constexpr CoordinateId from_slot(Index slot) { return CoordinateId(slot); }

  constexpr bool is_intercept() const { return slot_ == 0; }
  /// Predictor index; only meaningful when !is_intercept().
  constexpr Index index() const { return slot_ - 1; }
  constexpr Index slot() const { return slot_; }

  friend constexpr bool operator==(CoordinateId, CoordinateId) = default;

 private:
  constexpr explicit CoordinateId(Index slot) : slot_(slot) {}
  Index slot_;
};

/// Dense n x p predictor matrix, column-major so that coordinate descent reads
/// one contiguous column per update.
class DesignMatrix {
 public:
  explicit DesignMatrix(Matrix values, std::vector<std::string> names = {});

  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

  auto col(Index j) const { return values_.col(j); }
  double operator()(Index i, Index j) const { return values_(i, j); }
  const Matrix& values() const { return values_; }

  /// Sum of squares of column j, cached at construction.
  double col_sumsq(Index j) const { return col_sumsq_[j]; }
  /// Column sums (X^t 1), cached at construction.
  const Vector& col_sums() const { return col_sums_; }

  const std::vector<std::string>& names() const { return names_; }
  std::string name(Index j) const;

  DesignMatrix select_rows(std::span<const Index> rows) const;
  DesignMatrix select_cols(std::span<const Index> cols) const;

 private:
  Matrix values_;
  std::vector<std::string> names_;
  Vector col_sumsq_;
  Vector col_sums_;
};

struct ParameterVector {
  double mu = 0.0;
  Vector beta;

  static ParameterVector zeros(Index p) { return {0.0, Vector::Zero(p)}; }
  Index size() const { return beta.size(); }
  double value(CoordinateId c) const { return c.is_intercept() ? mu : beta[c.index()]; }
  void set(CoordinateId c, double v) {
    if (c.is_intercept()) mu = v;
    else beta[c.index()] = v;
  }
};

/// Partition of the p predictors into q disjoint, nonempty groups. Group
/// indices are zero-based internally.
class GroupStructure {
 public:
  GroupStructure(std::vector<int> assignment, int q);
  /// Infers q as 1 + the largest group index.
  explicit GroupStructure(std::vector<int> assignment);

  int group_count() const { return q_; }
  Index predictor_count() const { return static_cast<Index>(assignment_.size()); }
  int group_of(Index k) const { return assignment_[static_cast<std::size_t>(k)]; }
  const std::vector<Index>& members(int group) const { return members_[static_cast<std::size_t>(group)]; }
  const std::vector<int>& assignment() const { return assignment_; }

 private:
  std::vector<int> assignment_;
  int q_;
  std::vector<std::vector<Index>> members_;
};

struct LassoPenalty {
  double lambda = 0.0;
};

struct GroupPenalty {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  GroupStructure groups;
};

class PenaltySpec {
 public:
  static PenaltySpec lasso(double lambda);
  static PenaltySpec group(double lambda1, double lambda2, GroupStructure groups);

  bool is_group() const { return std::holds_alternative<GroupPenalty>(variant_); }
  const LassoPenalty* as_lasso() const { return std::get_if<LassoPenalty>(&variant_); }
  const GroupPenalty* as_group() const { return std::get_if<GroupPenalty>(&variant_); }

  /// Evaluates the penalty term at beta.
  double value(const Vector& beta) const;
  /// Largest per-coordinate penalty slope (lambda, or lambda1 + lambda2).
  double scale() const;

 private:
  explicit PenaltySpec(std::variant<LassoPenalty, GroupPenalty> v) : variant_(std::move(v)) {}
  std::variant<LassoPenalty, GroupPenalty> variant_;
};

/// Stationarity tolerance used by every solver: 1e-6 * (1 + lambda).
inline double tol_kkt(double lambda_scale) { return 1e-6 * (1.0 + lambda_scale); }

/// Sweeps between full from-scratch residual recomputes.
inline constexpr int kResidualRecomputePeriod = 100;

/// Residuals r_i = y_i - mu - x_i^t beta, maintained incrementally.
class ResidualState {
 public:
  ResidualState(const DesignMatrix& X, const Vector& y, const ParameterVector& theta);

  const Vector& r() const { return r_; }
  double operator[](Index i) const { return r_[i]; }
  const Vector& y() const { return y_; }
  Index size() const { return r_.size(); }

  /// Shifts residuals for a coordinate move old_value -> new_value.
  void apply_update(const DesignMatrix& X, CoordinateId which, double old_value, double new_value);

  /// Recomputes residuals from scratch and resets the staleness counter.
  void recompute(const DesignMatrix& X, const ParameterVector& theta);

  /// Called by solvers once per sweep; returns true when a full recompute is
  /// due (stale_counter has reached the recompute period).
  bool note_sweep();

  int stale_counter() const { return stale_counter_; }
  long updates_since_recompute() const { return updates_since_recompute_; }

  /// True when r_i is treated as exactly zero (|r_i| <= 1e-12 (1 + |y_i|)).
  bool is_zero(Index i) const;
  /// Sign of r_i with the zero band applied: -1, 0 or +1.
  int sign(Index i) const;

 private:
  Vector y_;
  Vector r_;
  int stale_counter_ = 0;
  long updates_since_recompute_ = 0;
};

/// Objective f = g + penalty. L2 uses (1/2) sum r^2, L1 uses sum |r|.
double objective(Loss loss, const DesignMatrix& X, const Vector& y, const ParameterVector& theta,
                 const PenaltySpec& penalty);

/// Objective evaluated from a residual vector that is already known.
double objective_from_residuals(Loss loss, const Vector& r, const Vector& beta, const PenaltySpec& penalty);

/// Loss term g from residuals.
double loss_value(Loss loss, const Vector& r);

/// One-sided directional derivative of f along +/- e_which.
double dir_deriv(Loss loss, const DesignMatrix& X, const ResidualState& state, const ParameterVector& theta,
                 const PenaltySpec& penalty, CoordinateId which, Direction direction);

/// Penalty contribution to the forward/backward coordinate derivative of
/// lambda |b| at the value b.
inline double lasso_slope(double b, double lambda, Direction d) {
  if (d == Direction::Forward) return b >= 0.0 ? lambda : -lambda;
  return b > 0.0 ? -lambda : lambda;
}

struct DescentScore {
  double h = 0.0;
  CoordinateId which = CoordinateId::intercept();
  Direction direction = Direction::Forward;
};

/// Minimum over all 2(p+1) coordinate directional derivatives. Ties go to the
/// lowest slot, Forward before Backward.
DescentScore steepest_descent_score(Loss loss, const DesignMatrix& X, const ResidualState& state,
                                    const ParameterVector& theta, const PenaltySpec& penalty);

/// b = max over columns (including the intercept column of ones) of sum x^2.
double column_bound_b(const DesignMatrix& X);

/// X^t r.
Vector gradient_sums(const DesignMatrix& X, const Vector& r);

/// Indices k with beta_k != 0.
std::vector<Index> active_set(const Vector& beta);

struct DescentCertificate {
  double b = 0.0;
  long steps_checked = 0;
  long violations = 0;
  /// Steps whose exact minimizer landed on the kink at zero.
  long clipped_steps = 0;
  /// Smallest (f_old - f_new) - d^2 / (2b) seen.
  double worst_margin = 0.0;
};

struct FitResult {
  ParameterVector theta;
  std::vector<Index> active_set;
  bool converged = false;
  /// Gave up before stationarity because the objective stopped improving
  /// (an Edgeworth stall), as opposed to running out of sweeps.
  bool stalled = false;
  int sweeps = 0;
  /// Coordinate updates actually applied (skipped coordinates excluded).
  long updates = 0;
  /// Coordinates visited: every greedy step, and every coordinate a cyclic
  /// sweep examines even when it is left unchanged.
  long visits = 0;
  double objective = 0.0;
  std::optional<std::vector<double>> trace;
  std::optional<DescentCertificate> certificate;
  std::vector<std::string> warnings;

  bool hit_cap() const { return !converged && !stalled; }
};

/// Column standardization to mean 0, variance 1 with back-transform of fitted
/// coefficients to the original scale.
class Standardizer {
 public:
  explicit Standardizer(const DesignMatrix& X);
  DesignMatrix transform(const DesignMatrix& X) const;
  ParameterVector to_original(const ParameterVector& standardized) const;
  ParameterVector to_standardized(const ParameterVector& original) const;

 private:
  Vector mean_;
  Vector scale_;
};

void require_finite(const Vector& v, const char* what);
void require_same_rows(const DesignMatrix& X, const Vector& y);

}  // namespace lassocd
