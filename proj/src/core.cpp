#include "lassocd/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lassocd {

const char* to_string(Loss loss) { return loss == Loss::L1 ? "l1" : "l2"; }
const char* to_string(Direction direction) { return direction == Direction::Forward ? "forward" : "backward"; }

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NonFiniteError(std::string(what) + " contains non-finite values");
}

void require_same_rows(const DesignMatrix& X, const Vector& y) {
  if (y.size() != X.rows()) {
    throw DimensionError("response length " + std::to_string(y.size()) + " does not match " +
                         std::to_string(X.rows()) + " design rows");
  }
}

// ---------------------------------------------------------------------------
// DesignMatrix

DesignMatrix::DesignMatrix(Matrix values, std::vector<std::string> names)
    : values_(std::move(values)), names_(std::move(names)) {
  if (values_.rows() < 1 || values_.cols() < 1) throw DimensionError("design matrix must be at least 1 x 1");
  if (!values_.allFinite()) throw NonFiniteError("design matrix contains non-finite values");
  if (!names_.empty() && static_cast<Index>(names_.size()) != values_.cols()) {
    throw DimensionError("column name count does not match predictor count");
  }
  col_sumsq_ = values_.colwise().squaredNorm().transpose();
  col_sums_ = values_.colwise().sum().transpose();
}

std::string DesignMatrix::name(Index j) const {
  if (names_.empty()) return "x" + std::to_string(j + 1);
  return names_[static_cast<std::size_t>(j)];
}

DesignMatrix DesignMatrix::select_rows(std::span<const Index> rows) const {
  Matrix out(static_cast<Index>(rows.size()), cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = values_.row(rows[i]);
  return DesignMatrix(std::move(out), names_);
}

DesignMatrix DesignMatrix::select_cols(std::span<const Index> cols) const {
  Matrix out(rows(), static_cast<Index>(cols.size()));
  std::vector<std::string> names;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.col(static_cast<Index>(j)) = values_.col(cols[j]);
    if (!names_.empty()) names.push_back(names_[static_cast<std::size_t>(cols[j])]);
  }
  return DesignMatrix(std::move(out), std::move(names));
}

// ---------------------------------------------------------------------------
// GroupStructure

namespace {
int infer_group_count(const std::vector<int>& assignment) {
  if (assignment.empty()) throw DimensionError("group assignment is empty");
  return 1 + *std::max_element(assignment.begin(), assignment.end());
}
}  // namespace

GroupStructure::GroupStructure(std::vector<int> assignment) : GroupStructure(assignment, infer_group_count(assignment)) {}

GroupStructure::GroupStructure(std::vector<int> assignment, int q) : assignment_(std::move(assignment)), q_(q) {
  if (assignment_.empty()) throw DimensionError("group assignment is empty");
  if (q_ < 1) throw std::invalid_argument("group count must be positive");
  members_.resize(static_cast<std::size_t>(q_));
  for (std::size_t k = 0; k < assignment_.size(); ++k) {
    const int g = assignment_[k];
    if (g < 0 || g >= q_) throw std::invalid_argument("group index out of range for predictor " + std::to_string(k));
    members_[static_cast<std::size_t>(g)].push_back(static_cast<Index>(k));
  }
  for (int g = 0; g < q_; ++g) {
    if (members_[static_cast<std::size_t>(g)].empty()) {
      throw std::invalid_argument("group " + std::to_string(g + 1) + " has no members");
    }
  }
}

// ---------------------------------------------------------------------------
// PenaltySpec

namespace {
void require_lambda(double v, const char* what) {
  if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument(std::string(what) + " must be finite and >= 0");
}
}  // namespace

PenaltySpec PenaltySpec::lasso(double lambda) {
  require_lambda(lambda, "lambda");
  return PenaltySpec(LassoPenalty{lambda});
}

PenaltySpec PenaltySpec::group(double lambda1, double lambda2, GroupStructure groups) {
  require_lambda(lambda1, "lambda1");
  require_lambda(lambda2, "lambda2");
  return PenaltySpec(GroupPenalty{lambda1, lambda2, std::move(groups)});
}

double PenaltySpec::value(const Vector& beta) const {
  if (const auto* l = as_lasso()) return l->lambda * beta.lpNorm<1>();
  const auto& g = *as_group();
  if (g.groups.predictor_count() != beta.size()) throw DimensionError("group structure does not cover beta");
  double l2_part = 0.0;
  for (int j = 0; j < g.groups.group_count(); ++j) {
    double sq = 0.0;
    for (Index k : g.groups.members(j)) sq += beta[k] * beta[k];
    l2_part += std::sqrt(sq);
  }
  return g.lambda2 * l2_part + g.lambda1 * beta.lpNorm<1>();
}

double PenaltySpec::scale() const {
  if (const auto* l = as_lasso()) return l->lambda;
  return as_group()->lambda1 + as_group()->lambda2;
}

// ---------------------------------------------------------------------------
// ResidualState

ResidualState::ResidualState(const DesignMatrix& X, const Vector& y, const ParameterVector& theta) : y_(y) {
  require_same_rows(X, y);
  if (theta.size() != X.cols()) throw DimensionError("parameter vector length does not match predictor count");
  recompute(X, theta);
}

void ResidualState::apply_update(const DesignMatrix& X, CoordinateId which, double old_value, double new_value) {
  const double delta = old_value - new_value;
  if (which.is_intercept()) {
    r_.array() += delta;
  } else {
    if (which.index() < 0 || which.index() >= X.cols()) throw std::out_of_range("coordinate index out of range");
    r_.noalias() += delta * X.col(which.index());
  }
  ++updates_since_recompute_;
}

void ResidualState::recompute(const DesignMatrix& X, const ParameterVector& theta) {
  r_ = y_;
  r_.array() -= theta.mu;
  r_.noalias() -= X.values() * theta.beta;
  stale_counter_ = 0;
  updates_since_recompute_ = 0;
}

bool ResidualState::note_sweep() { return ++stale_counter_ >= kResidualRecomputePeriod; }

bool ResidualState::is_zero(Index i) const { return std::abs(r_[i]) <= 1e-12 * (1.0 + std::abs(y_[i])); }

int ResidualState::sign(Index i) const {
  if (is_zero(i)) return 0;
  return r_[i] > 0.0 ? 1 : -1;
}

// ---------------------------------------------------------------------------
// Objective and derivatives

double loss_value(Loss loss, const Vector& r) {
  return loss == Loss::L2 ? 0.5 * r.squaredNorm() : r.lpNorm<1>();
}

double objective_from_residuals(Loss loss, const Vector& r, const Vector& beta, const PenaltySpec& penalty) {
  return loss_value(loss, r) + penalty.value(beta);
}

double objective(Loss loss, const DesignMatrix& X, const Vector& y, const ParameterVector& theta,
                 const PenaltySpec& penalty) {
  require_same_rows(X, y);
  if (theta.size() != X.cols()) throw DimensionError("parameter vector length does not match predictor count");
  if (penalty.is_group() && loss != Loss::L2) throw std::invalid_argument("group penalty requires l2 loss");
  require_finite(y, "response");
  require_finite(theta.beta, "beta");
  if (!std::isfinite(theta.mu)) throw NonFiniteError("intercept is not finite");
  Vector r = y;
  r.array() -= theta.mu;
  r.noalias() -= X.values() * theta.beta;
  return objective_from_residuals(loss, r, theta.beta, penalty);
}

namespace {

// Directional derivative of g along +e (forward) for the column `col`.
template <typename Col>
double loss_forward(Loss loss, const ResidualState& state, const Col& col) {
  if (loss == Loss::L2) return -col.dot(state.r());
  double d = 0.0;
  for (Index i = 0; i < state.size(); ++i) {
    const int s = state.sign(i);
    if (s > 0) d -= col[i];
    else if (s < 0) d += col[i];
    else d += std::abs(col[i]);
  }
  return d;
}

template <typename Col>
double loss_backward(Loss loss, const ResidualState& state, const Col& col) {
  if (loss == Loss::L2) return col.dot(state.r());
  double d = 0.0;
  for (Index i = 0; i < state.size(); ++i) {
    const int s = state.sign(i);
    if (s > 0) d += col[i];
    else if (s < 0) d -= col[i];
    else d += std::abs(col[i]);
  }
  return d;
}

double penalty_slope(const PenaltySpec& penalty, const ParameterVector& theta, Index k, Direction d) {
  if (const auto* l = penalty.as_lasso()) return lasso_slope(theta.beta[k], l->lambda, d);
  const auto& g = *penalty.as_group();
  double sq = 0.0;
  for (Index m : g.groups.members(g.groups.group_of(k))) sq += theta.beta[m] * theta.beta[m];
  const double norm = std::sqrt(sq);
  double group_part = g.lambda2;
  if (norm > 0.0) group_part = g.lambda2 * theta.beta[k] / norm * (d == Direction::Forward ? 1.0 : -1.0);
  return lasso_slope(theta.beta[k], g.lambda1, d) + group_part;
}

}  // namespace

double dir_deriv(Loss loss, const DesignMatrix& X, const ResidualState& state, const ParameterVector& theta,
                 const PenaltySpec& penalty, CoordinateId which, Direction direction) {
  if (which.is_intercept()) {
    const Vector ones = Vector::Ones(X.rows());
    return direction == Direction::Forward ? loss_forward(loss, state, ones) : loss_backward(loss, state, ones);
  }
  const Index k = which.index();
  if (k < 0 || k >= X.cols()) throw std::out_of_range("coordinate index out of range");
  const auto col = X.col(k);
  const double g = direction == Direction::Forward ? loss_forward(loss, state, col) : loss_backward(loss, state, col);
  return g + penalty_slope(penalty, theta, k, direction);
}

DescentScore steepest_descent_score(Loss loss, const DesignMatrix& X, const ResidualState& state,
                                    const ParameterVector& theta, const PenaltySpec& penalty) {
  DescentScore best;
  bool first = true;
  for (Index slot = 0; slot <= X.cols(); ++slot) {
    const CoordinateId c = CoordinateId::from_slot(slot);
    for (Direction d : {Direction::Forward, Direction::Backward}) {
      const double v = dir_deriv(loss, X, state, theta, penalty, c, d);
      if (first || v < best.h) {
        best = {v, c, d};
        first = false;
      }
    }
  }
  return best;
}

double column_bound_b(const DesignMatrix& X) {
  double b = static_cast<double>(X.rows());
  for (Index j = 0; j < X.cols(); ++j) b = std::max(b, X.col_sumsq(j));
  return b;
}

Vector gradient_sums(const DesignMatrix& X, const Vector& r) { return X.values().transpose() * r; }

std::vector<Index> active_set(const Vector& beta) {
  std::vector<Index> out;
  for (Index k = 0; k < beta.size(); ++k) {
    if (beta[k] != 0.0) out.push_back(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Standardizer

Standardizer::Standardizer(const DesignMatrix& X) : mean_(X.cols()), scale_(X.cols()) {
  const double n = static_cast<double>(X.rows());
  for (Index j = 0; j < X.cols(); ++j) {
    const double m = X.col(j).sum() / n;
    const double var = (X.col(j).array() - m).square().sum() / n;
    mean_[j] = m;
    scale_[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
}

DesignMatrix Standardizer::transform(const DesignMatrix& X) const {
  Matrix v = X.values();
  for (Index j = 0; j < v.cols(); ++j) v.col(j) = (v.col(j).array() - mean_[j]) / scale_[j];
  return DesignMatrix(std::move(v), X.names());
}

ParameterVector Standardizer::to_original(const ParameterVector& s) const {
  ParameterVector out;
  out.beta = s.beta.cwiseQuotient(scale_);
  out.mu = s.mu - mean_.dot(out.beta);
  return out;
}

ParameterVector Standardizer::to_standardized(const ParameterVector& o) const {
  ParameterVector out;
  out.beta = o.beta.cwiseProduct(scale_);
  out.mu = o.mu + mean_.dot(o.beta);
  return out;
}

}  // namespace lassocd
