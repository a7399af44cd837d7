#include "lassocd/l2_solver.hpp"

#include "solver_common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace lassocd {

const char* to_string(Strategy strategy) { return strategy == Strategy::Cyclic ? "cyclic" : "greedy"; }

void FitConfig::validate() const {
  if (max_sweeps < 1) throw std::invalid_argument("max_sweeps must be >= 1");
  if (!(tol_obj > 0.0)) throw std::invalid_argument("tol_obj must be > 0");
}

double update_mu_l2(const DesignMatrix& X, ResidualState& state, ParameterVector& theta) {
  const double old_mu = theta.mu;
  const double new_mu = old_mu + state.r().sum() / static_cast<double>(state.size());
  state.apply_update(X, CoordinateId::intercept(), old_mu, new_mu);
  theta.mu = new_mu;
  return new_mu;
}

std::optional<double> update_beta_k_l2(const DesignMatrix& X, ResidualState& state, ParameterVector& theta, Index k,
                                       double lambda, double ridge_aug) {
  if (k < 0 || k >= X.cols()) throw std::out_of_range("coordinate index out of range");
  return update_beta_k_l2(X, state, theta, k, lambda, ridge_aug, X.col(k).dot(state.r()));
}

std::optional<double> update_beta_k_l2(const DesignMatrix& X, ResidualState& state, ParameterVector& theta, Index k,
                                       double lambda, double ridge_aug, double grad_sum) {
  const double c = X.col_sumsq(k);
  if (c == 0.0) return std::nullopt;
  const double b = theta.beta[k];
  const double dg = -grad_sum + ridge_aug * b;
  const double curvature = c + ridge_aug;
  const double left = std::min(0.0, b - (dg - lambda) / curvature);
  const double right = std::max(0.0, b - (dg + lambda) / curvature);
  const double next = left != 0.0 ? left : right;
  if (next != b) {
    state.apply_update(X, CoordinateId::beta(k), b, next);
    theta.beta[k] = next;
  }
  return next;
}

double kkt_violation_l2(const DesignMatrix& X, const Vector& r, const ParameterVector& theta, double lambda) {
  const Vector G = gradient_sums(X, r);
  double worst = std::abs(r.sum());
  for (Index k = 0; k < X.cols(); ++k) {
    const double b = theta.beta[k];
    const double v = b == 0.0 ? std::abs(G[k]) - lambda : std::abs(G[k] - lambda * (b > 0.0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

namespace {

FitResult fit_l2_cyclic(const DesignMatrix& X, const Vector& y, double lambda, const FitConfig& config,
                        ParameterVector theta) {
  const PenaltySpec penalty = PenaltySpec::lasso(lambda);
  const double tol = tol_kkt(lambda);
  ResidualState state(X, y, theta);
  detail::FitRecorder rec(config.trace);
  detail::warn_zero_variance(X, rec.result);

  double f_prev = objective_from_residuals(Loss::L2, state.r(), theta.beta, penalty);
  rec.record(f_prev);

  for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    rec.result.sweeps = sweep;
    update_mu_l2(X, state, theta);
    ++rec.result.updates;
    ++rec.result.visits;
    for (Index k = 0; k < X.cols(); ++k) {
      if (X.col_sumsq(k) == 0.0) continue;
      ++rec.result.visits;
      const double G = X.col(k).dot(state.r());
      const double b = theta.beta[k];
      const double forward = -G + lasso_slope(b, lambda, Direction::Forward);
      const double backward = G + lasso_slope(b, lambda, Direction::Backward);
      if (forward >= 0.0 && backward >= 0.0) continue;
      update_beta_k_l2(X, state, theta, k, lambda, 0.0, G);
      ++rec.result.updates;
    }
    if (state.note_sweep()) state.recompute(X, theta);

    double f = objective_from_residuals(Loss::L2, state.r(), theta.beta, penalty);
    if (detail::relative_change(f_prev, f) < config.tol_obj) {
      state.recompute(X, theta);
      f = objective_from_residuals(Loss::L2, state.r(), theta.beta, penalty);
      if (kkt_violation_l2(X, state.r(), theta, lambda) <= tol) {
        rec.record(f);
        rec.result.converged = true;
        break;
      }
    }
    rec.record(f);
    f_prev = f;
  }
  rec.result.theta = std::move(theta);
  return std::move(rec.result);
}

// Greedy steps keep G = X^t r and sum(r) current through cached Gram columns
// X^t x_k, so each step costs O(n + p) after a column's first use.
class GreedyL2 {
 public:
  GreedyL2(const DesignMatrix& X, const Vector& y, double lambda, const FitConfig& config, ParameterVector theta)
      : X_(X),
        lambda_(lambda),
        config_(config),
        penalty_(PenaltySpec::lasso(lambda)),
        theta_(std::move(theta)),
        state_(X, y, theta_),
        rec_(config.trace) {
    refresh_gradients();
  }

  FitResult run() {
    const Index p = X_.cols();
    const long steps_per_sweep = static_cast<long>(p) + 1;
    const long max_steps = static_cast<long>(config_.max_sweeps) * steps_per_sweep;
    const double tol = tol_kkt(lambda_);
    detail::warn_zero_variance(X_, rec_.result);

    DescentCertificate cert;
    cert.b = column_bound_b(X_);
    const bool need_objective = config_.trace || config_.certify_descent;
    double f = objective_from_residuals(Loss::L2, state_.r(), theta_.beta, penalty_);
    rec_.record(f);

    long steps = 0;
    while (true) {
      DescentScore best = score();
      if (best.h >= -tol) {
        state_.recompute(X_, theta_);
        refresh_gradients();
        best = score();
        if (best.h >= -tol) {
          rec_.result.converged = true;
          break;
        }
      }
      if (steps >= max_steps) break;

      const CoordinateId c = best.which;
      const double old_value = theta_.value(c);
      const double new_value = step(c);
      ++steps;
      ++rec_.result.updates;
      ++rec_.result.visits;

      if (need_objective) {
        const double f_new = objective_from_residuals(Loss::L2, state_.r(), theta_.beta, penalty_);
        if (config_.certify_descent) {
          const double margin = (f - f_new) - best.h * best.h / (2.0 * cert.b);
          if (cert.steps_checked == 0 || margin < cert.worst_margin) cert.worst_margin = margin;
          ++cert.steps_checked;
          if (margin < -1e-10) ++cert.violations;
          if (!c.is_intercept() && new_value == 0.0 && old_value != 0.0) ++cert.clipped_steps;
        }
        f = f_new;
        rec_.record(f);
      }

      if (steps % steps_per_sweep == 0 && state_.note_sweep()) {
        state_.recompute(X_, theta_);
        refresh_gradients();
      }
    }

    rec_.result.sweeps = static_cast<int>((steps + steps_per_sweep - 1) / steps_per_sweep);
    if (config_.certify_descent) rec_.result.certificate = cert;
    rec_.result.theta = std::move(theta_);
    return std::move(rec_.result);
  }

 private:
  void refresh_gradients() {
    grad_ = gradient_sums(X_, state_.r());
    grad0_ = state_.r().sum();
  }

  DescentScore score() const {
    DescentScore best{-grad0_, CoordinateId::intercept(), Direction::Forward};
    if (grad0_ < best.h) best = {grad0_, CoordinateId::intercept(), Direction::Backward};
    for (Index k = 0; k < X_.cols(); ++k) {
      if (X_.col_sumsq(k) == 0.0) continue;
      const double b = theta_.beta[k];
      const double forward = -grad_[k] + lasso_slope(b, lambda_, Direction::Forward);
      const double backward = grad_[k] + lasso_slope(b, lambda_, Direction::Backward);
      if (forward < best.h) best = {forward, CoordinateId::beta(k), Direction::Forward};
      if (backward < best.h) best = {backward, CoordinateId::beta(k), Direction::Backward};
    }
    return best;
  }

  const Vector& gram_column(Index k) {
    auto it = gram_.find(k);
    if (it == gram_.end()) it = gram_.emplace(k, Vector(X_.values().transpose() * X_.col(k))).first;
    return it->second;
  }

  // Applies the exact coordinate minimization and keeps grad_ current.
  double step(CoordinateId c) {
    const double n = static_cast<double>(X_.rows());
    if (c.is_intercept()) {
      const double old_mu = theta_.mu;
      const double new_mu = update_mu_l2(X_, state_, theta_);
      const double delta = new_mu - old_mu;
      grad_.noalias() -= delta * X_.col_sums();
      grad0_ -= delta * n;
      return new_mu;
    }
    const Index k = c.index();
    const double old_b = theta_.beta[k];
    const double new_b = update_beta_k_l2(X_, state_, theta_, k, lambda_, 0.0, grad_[k]).value_or(old_b);
    const double delta = new_b - old_b;
    if (delta != 0.0) {
      grad_.noalias() -= delta * gram_column(k);
      grad0_ -= delta * X_.col_sums()[k];
    }
    return new_b;
  }

  const DesignMatrix& X_;
  double lambda_;
  FitConfig config_;
  PenaltySpec penalty_;
  ParameterVector theta_;
  ResidualState state_;
  detail::FitRecorder rec_;
  Vector grad_;
  double grad0_ = 0.0;
  std::unordered_map<Index, Vector> gram_;
};

}  // namespace

FitResult fit_l2(const DesignMatrix& X, const Vector& y, double lambda, const FitConfig& config,
                 const std::optional<ParameterVector>& warm_start) {
  config.validate();
  ParameterVector theta = detail::initial_theta(X, y, warm_start);
  if (!std::isfinite(lambda) || lambda < 0.0) throw std::invalid_argument("lambda must be finite and >= 0");

  FitResult result = config.strategy == Strategy::Cyclic ? fit_l2_cyclic(X, y, lambda, config, std::move(theta))
                                                          : GreedyL2(X, y, lambda, config, std::move(theta)).run();
  detail::finalize(result, Loss::L2, X, y, PenaltySpec::lasso(lambda));
  return result;
}

}  // namespace lassocd
