#include "lassocd/l1_solver.hpp"

#include "solver_common.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace lassocd {

namespace {

// Smallest z whose cumulative weight reaches half the total, found by
// quickselect; small ranges fall back to a sort and scan. Reorders `pts`.
double weighted_median_inplace(std::vector<WeightedPoint>& pts) {
  const auto by_z = [](const WeightedPoint& a, const WeightedPoint& b) { return a.z < b.z; };
  double total = 0.0;
  for (const auto& pt : pts) total += pt.w;
  const double half = 0.5 * total;
  double below = 0.0;  // weight of points known to lie left of [lo, hi)
  auto lo = pts.begin();
  auto hi = pts.end();
  while (hi - lo > 16) {
    const auto mid = lo + (hi - lo) / 2;
    std::nth_element(lo, mid, hi, by_z);
    const double pivot = mid->z;
    const auto less_end = std::partition(lo, hi, [pivot](const WeightedPoint& p) { return p.z < pivot; });
    const auto equal_end = std::partition(less_end, hi, [pivot](const WeightedPoint& p) { return p.z == pivot; });
    double w_less = 0.0;
    for (auto it = lo; it != less_end; ++it) w_less += it->w;
    double w_equal = 0.0;
    for (auto it = less_end; it != equal_end; ++it) w_equal += it->w;
    if (below + w_less >= half) {
      hi = less_end;
    } else if (below + w_less + w_equal >= half) {
      return pivot;
    } else {
      below += w_less + w_equal;
      lo = equal_end;
    }
  }
  std::sort(lo, hi, by_z);
  double cumulative = below;
  for (auto it = lo; it != hi; ++it) {
    cumulative += it->w;
    if (cumulative >= half) return it->z;
  }
  // Rounding left the crossing just past the range; its last point is the
  // largest location below the remaining half.
  return hi != lo ? (hi - 1)->z : pts.back().z;
}

void check_points(std::span<const WeightedPoint> points) {
  if (points.empty()) throw std::invalid_argument("weighted_median of an empty set");
  for (const auto& pt : points) {
    if (!(pt.w > 0.0) || !std::isfinite(pt.w) || !std::isfinite(pt.z)) {
      throw std::invalid_argument("weighted_median needs finite locations and positive weights");
    }
  }
}

}  // namespace

double weighted_median(std::span<const WeightedPoint> points) {
  check_points(points);
  std::vector<WeightedPoint> work(points.begin(), points.end());
  return weighted_median_inplace(work);
}

// ---------------------------------------------------------------------------
// L1DerivativeTable

L1DerivativeTable::L1DerivativeTable(const DesignMatrix& X, const ResidualState& state) { rebuild(X, state); }

void L1DerivativeTable::rebuild(const DesignMatrix& X, const ResidualState& state) {
  const Index n = X.rows();
  const Index p = X.cols();
  forward_ = Vector::Zero(p + 1);
  backward_ = Vector::Zero(p + 1);
  Vector positive = Vector::Zero(n);  // weights giving sum over r > 0
  Vector negative = Vector::Zero(n);
  Vector zero = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const int s = state.sign(i);
    (s > 0 ? positive : (s < 0 ? negative : zero))[i] = 1.0;
  }
  forward_[0] = -positive.sum() + negative.sum() + zero.sum();
  backward_[0] = positive.sum() - negative.sum() + zero.sum();
  const Matrix& v = X.values();
  const Vector pos_minus_neg = positive - negative;
  const Vector signed_part = v.transpose() * pos_minus_neg;
  const Vector zero_part = v.cwiseAbs().transpose() * zero;
  forward_.tail(p) = -signed_part + zero_part;
  backward_.tail(p) = signed_part + zero_part;
}

void L1DerivativeTable::move_row(const Eigen::Ref<const Vector>& x, int from, int to) {
  if (from == to) return;
  const Index p = x.size();
  forward_[0] += contribution_forward(1.0, to) - contribution_forward(1.0, from);
  backward_[0] += contribution_backward(1.0, to) - contribution_backward(1.0, from);
  auto fwd = forward_.tail(p);
  auto bwd = backward_.tail(p);
  if (from != 0 && to != 0) {
    const double s = static_cast<double>(to - from);
    fwd.noalias() -= s * x;
    bwd.noalias() += s * x;
  } else if (from == 0) {
    const double s = static_cast<double>(to);
    fwd.array() -= s * x.array() + x.array().abs();
    bwd.array() += s * x.array() - x.array().abs();
  } else {
    const double s = static_cast<double>(from);
    fwd.array() += x.array().abs() + s * x.array();
    bwd.array() += x.array().abs() - s * x.array();
  }
}

double L1DerivativeTable::forward(CoordinateId c, const ParameterVector& theta, double lambda) const {
  const double g = forward_[c.slot()];
  return c.is_intercept() ? g : g + lasso_slope(theta.beta[c.index()], lambda, Direction::Forward);
}

double L1DerivativeTable::backward(CoordinateId c, const ParameterVector& theta, double lambda) const {
  const double g = backward_[c.slot()];
  return c.is_intercept() ? g : g + lasso_slope(theta.beta[c.index()], lambda, Direction::Backward);
}

// ---------------------------------------------------------------------------
// Updates

double update_mu_l1(const DesignMatrix& X, ResidualState& state, ParameterVector& theta) {
  std::vector<WeightedPoint> pts(static_cast<std::size_t>(state.size()));
  for (Index i = 0; i < state.size(); ++i) pts[static_cast<std::size_t>(i)] = {state[i] + theta.mu, 1.0};
  const double next = weighted_median_inplace(pts);
  if (next != theta.mu) {
    state.apply_update(X, CoordinateId::intercept(), theta.mu, next);
    theta.mu = next;
  }
  return next;
}

std::optional<double> update_beta_k_l1(const DesignMatrix& X, ResidualState& state, ParameterVector& theta, Index k,
                                       double lambda) {
  if (k < 0 || k >= X.cols()) throw std::out_of_range("coordinate index out of range");
  const auto col = X.col(k);
  const double b = theta.beta[k];
  std::vector<WeightedPoint> pts;
  pts.reserve(static_cast<std::size_t>(X.rows()) + 1);
  for (Index i = 0; i < X.rows(); ++i) {
    const double x = col[i];
    if (x == 0.0) continue;
    pts.push_back({(state[i] + x * b) / x, std::abs(x)});
  }
  if (lambda > 0.0) pts.push_back({0.0, lambda});
  if (pts.empty()) return std::nullopt;
  const double next = weighted_median_inplace(pts);
  if (next != b) {
    state.apply_update(X, CoordinateId::beta(k), b, next);
    theta.beta[k] = next;
  }
  return next;
}

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double coordinate_update(const DesignMatrix& X, ResidualState& state, ParameterVector& theta, CoordinateId c,
                         double lambda) {
  if (c.is_intercept()) return update_mu_l1(X, state, theta);
  return update_beta_k_l1(X, state, theta, c.index(), lambda).value_or(theta.beta[c.index()]);
}

bool skippable(const DesignMatrix& X, CoordinateId c, double lambda) {
  return !c.is_intercept() && X.col_sumsq(c.index()) == 0.0 && lambda == 0.0;
}

class GreedyL1 {
 public:
  GreedyL1(const DesignMatrix& X, const Vector& y, double lambda, const FitConfig& config, ParameterVector theta)
      : X_(X),
        rows_(X.values()),
        lambda_(lambda),
        config_(config),
        penalty_(PenaltySpec::lasso(lambda)),
        theta_(std::move(theta)),
        state_(X, y, theta_),
        table_(X, state_),
        rec_(config.trace) {
    capture_signs();
  }

  FitResult run() {
    const Index p = X_.cols();
    const long steps_per_sweep = static_cast<long>(p) + 1;
    const long max_steps = static_cast<long>(config_.max_sweeps) * steps_per_sweep;
    const double tol = tol_kkt(lambda_);
    detail::warn_zero_variance(X_, rec_.result);
    rec_.record(objective_from_residuals(Loss::L1, state_.r(), theta_.beta, penalty_));

    long steps = 0;
    int stalls = 0;
    double f_sweep = objective_from_residuals(Loss::L1, state_.r(), theta_.beta, penalty_);
    while (true) {
      DescentScore best = score();
      if (best.h >= -tol) {
        resync();
        best = score();
        if (best.h >= -tol) {
          rec_.result.converged = true;
          break;
        }
      }
      if (steps >= max_steps) break;

      const CoordinateId c = best.which;
      const double old_value = theta_.value(c);
      const double new_value = coordinate_update(X_, state_, theta_, c, lambda_);
      ++steps;
      ++rec_.result.visits;
      if (new_value == old_value) {
        // Table and residual disagree; resync once, give up if it repeats.
        resync();
        if (++stalls > 1) {
          rec_.result.warnings.push_back("greedy l1 stalled at coordinate slot " + std::to_string(c.slot()));
          rec_.result.stalled = true;
          break;
        }
        continue;
      }
      stalls = 0;
      ++rec_.result.updates;
      refresh_signs(c);
      if (config_.trace) rec_.record(objective_from_residuals(Loss::L1, state_.r(), theta_.beta, penalty_));
      if (steps % steps_per_sweep == 0) {
        if (state_.note_sweep()) resync();
        // Edgeworth steps can zigzag toward a nonsmooth point through
        // ever smaller moves; give up once a sweep's worth of steps stalls.
        const double f = objective_from_residuals(Loss::L1, state_.r(), theta_.beta, penalty_);
        if (detail::relative_change(f_sweep, f) < config_.tol_obj) {
          resync();
          if (score().h < -tol) {
            rec_.result.warnings.push_back("greedy l1 objective stalled before stationarity");
            rec_.result.stalled = true;
            break;
          }
        }
        f_sweep = f;
      }
    }

    rec_.result.sweeps = static_cast<int>((steps + steps_per_sweep - 1) / steps_per_sweep);
    rec_.result.theta = std::move(theta_);
    return std::move(rec_.result);
  }

 private:
  DescentScore score() const {
    DescentScore best{table_.forward(CoordinateId::intercept(), theta_, lambda_), CoordinateId::intercept(),
                      Direction::Forward};
    const double b0 = table_.backward(CoordinateId::intercept(), theta_, lambda_);
    if (b0 < best.h) best = {b0, CoordinateId::intercept(), Direction::Backward};
    for (Index k = 0; k < X_.cols(); ++k) {
      const CoordinateId c = CoordinateId::beta(k);
      if (skippable(X_, c, lambda_)) continue;
      const double f = table_.forward(c, theta_, lambda_);
      const double b = table_.backward(c, theta_, lambda_);
      if (f < best.h) best = {f, c, Direction::Forward};
      if (b < best.h) best = {b, c, Direction::Backward};
    }
    return best;
  }

  void capture_signs() {
    signs_.resize(static_cast<std::size_t>(X_.rows()));
    for (Index i = 0; i < X_.rows(); ++i) signs_[static_cast<std::size_t>(i)] = state_.sign(i);
  }

  void resync() {
    state_.recompute(X_, theta_);
    table_.rebuild(X_, state_);
    capture_signs();
  }

  // Only rows touched by the update can change sign class.
  void refresh_signs(CoordinateId c) {
    for (Index i = 0; i < X_.rows(); ++i) {
      if (!c.is_intercept() && X_(i, c.index()) == 0.0) continue;
      const int now = state_.sign(i);
      int& before = signs_[static_cast<std::size_t>(i)];
      if (now != before) {
        table_.move_row(rows_.row(i).transpose(), before, now);
        before = now;
      }
    }
  }

  const DesignMatrix& X_;
  RowMajorMatrix rows_;
  double lambda_;
  FitConfig config_;
  PenaltySpec penalty_;
  ParameterVector theta_;
  ResidualState state_;
  L1DerivativeTable table_;
  std::vector<int> signs_;
  detail::FitRecorder rec_;
};

FitResult fit_l1_cyclic(const DesignMatrix& X, const Vector& y, double lambda, const FitConfig& config,
                        ParameterVector theta) {
  const PenaltySpec penalty = PenaltySpec::lasso(lambda);
  const double tol = tol_kkt(lambda);
  ResidualState state(X, y, theta);
  detail::FitRecorder rec(config.trace);
  detail::warn_zero_variance(X, rec.result);
  double f_prev = objective_from_residuals(Loss::L1, state.r(), theta.beta, penalty);
  rec.record(f_prev);

  for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    rec.result.sweeps = sweep;
    bool stationary = true;
    for (Index slot = 0; slot <= X.cols(); ++slot) {
      const CoordinateId c = CoordinateId::from_slot(slot);
      if (skippable(X, c, lambda)) continue;
      ++rec.result.visits;
      const double forward = dir_deriv(Loss::L1, X, state, theta, penalty, c, Direction::Forward);
      const double backward = dir_deriv(Loss::L1, X, state, theta, penalty, c, Direction::Backward);
      if (forward >= -tol && backward >= -tol) continue;
      stationary = false;
      const double old_value = theta.value(c);
      if (coordinate_update(X, state, theta, c, lambda) != old_value) ++rec.result.updates;
    }
    if (state.note_sweep()) state.recompute(X, theta);
    const double f = objective_from_residuals(Loss::L1, state.r(), theta.beta, penalty);
    rec.record(f);
    if (stationary) {
      rec.result.converged = true;
      break;
    }
    if (detail::relative_change(f_prev, f) < config.tol_obj) {
      rec.result.warnings.push_back("cyclic l1 objective stalled before stationarity");
      rec.result.stalled = true;
      break;
    }
    f_prev = f;
  }
  rec.result.theta = std::move(theta);
  return std::move(rec.result);
}

}  // namespace

FitResult fit_l1(const DesignMatrix& X, const Vector& y, double lambda, const FitConfig& config,
                 const std::optional<ParameterVector>& warm_start) {
  config.validate();
  ParameterVector theta = detail::initial_theta(X, y, warm_start);
  if (!std::isfinite(lambda) || lambda < 0.0) throw std::invalid_argument("lambda must be finite and >= 0");

  FitResult result = config.strategy == Strategy::Greedy ? GreedyL1(X, y, lambda, config, std::move(theta)).run()
                                                         : fit_l1_cyclic(X, y, lambda, config, std::move(theta));
  detail::finalize(result, Loss::L1, X, y, PenaltySpec::lasso(lambda));
  return result;
}

}  // namespace lassocd
