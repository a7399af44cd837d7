#include "lassocd/group_solver.hpp"

#include "solver_common.hpp"

#include <cmath>
#include <stdexcept>

namespace lassocd {

double majorize_norm(const Vector& gamma, const Vector& gamma_m) {
  if (gamma.size() != gamma_m.size()) throw DimensionError("majorize_norm: size mismatch");
  const double anchor = gamma_m.norm();
  if (!(anchor > 0.0)) throw std::domain_error("majorize_norm: anchor norm must be positive");
  return anchor + (gamma.squaredNorm() - anchor * anchor) / (2.0 * anchor);
}

GroupFitState::GroupFitState(const DesignMatrix& X, const Vector& y, ParameterVector theta_in,
                             const GroupStructure& groups)
    : theta(std::move(theta_in)), group_norms(groups.group_count()), residual(X, y, theta) {
  if (groups.predictor_count() != X.cols()) throw DimensionError("group structure does not match predictor count");
  for (int j = 0; j < groups.group_count(); ++j) refresh_norm(groups, j);
}

double GroupFitState::member_norm(const GroupStructure& groups, int group) const {
  double sq = 0.0;
  for (Index m : groups.members(group)) sq += theta.beta[m] * theta.beta[m];
  return std::sqrt(sq);
}

void GroupFitState::refresh_norm(const GroupStructure& groups, int group) {
  group_norms[group] = member_norm(groups, group);
}

namespace {

double others_norm(const GroupFitState& state, const GroupStructure& groups, Index k) {
  double sq = 0.0;
  for (Index m : groups.members(groups.group_of(k))) {
    if (m != k) sq += state.theta.beta[m] * state.theta.beta[m];
  }
  return std::sqrt(sq);
}

}  // namespace

std::optional<double> update_group_coordinate(const DesignMatrix& X, GroupFitState& state,
                                              const GroupStructure& groups, Index k, double lambda1, double lambda2) {
  if (k < 0 || k >= X.cols()) throw std::out_of_range("coordinate index out of range");
  const int j = groups.group_of(k);
  std::optional<double> result;
  if (others_norm(state, groups, k) < kZeroAnchorNorm) {
    // Rest of the group is zero: ||gamma_j||_2 = |beta_k| exactly.
    for (Index m : groups.members(j)) {
      if (m != k && state.theta.beta[m] != 0.0) {
        state.residual.apply_update(X, CoordinateId::beta(m), state.theta.beta[m], 0.0);
        state.theta.beta[m] = 0.0;
      }
    }
    result = update_beta_k_l2(X, state.residual, state.theta, k, lambda1 + lambda2, 0.0);
  } else {
    const double anchor = state.member_norm(groups, j);
    result = update_beta_k_l2(X, state.residual, state.theta, k, lambda1, lambda2 / anchor);
  }
  state.refresh_norm(groups, j);
  return result;
}

double group_surrogate(const DesignMatrix& X, const GroupFitState& state, const GroupStructure& groups, Index k,
                       double lambda1, double lambda2, double value) {
  const int j = groups.group_of(k);
  const double old = state.theta.beta[k];
  const Vector r = state.residual.r() - (value - old) * X.col(k);
  double g = 0.5 * r.squaredNorm();
  double l1 = 0.0;
  Vector gamma(static_cast<Index>(groups.members(j).size()));
  Vector gamma_m(gamma.size());
  for (std::size_t i = 0; i < groups.members(j).size(); ++i) {
    const Index m = groups.members(j)[i];
    gamma_m[static_cast<Index>(i)] = state.theta.beta[m];
    gamma[static_cast<Index>(i)] = m == k ? value : state.theta.beta[m];
  }
  for (Index m = 0; m < X.cols(); ++m) l1 += std::abs(m == k ? value : state.theta.beta[m]);
  double group_terms = 0.0;
  for (int h = 0; h < groups.group_count(); ++h) {
    if (h == j) continue;
    group_terms += state.group_norms[h];
  }
  const double own = gamma_m.norm() > 0.0 ? majorize_norm(gamma, gamma_m) : gamma.norm();
  return g + lambda2 * (group_terms + own) + lambda1 * l1;
}

double kkt_violation_group(const DesignMatrix& X, const Vector& r, const ParameterVector& theta,
                           const GroupStructure& groups, double lambda1, double lambda2) {
  const Vector G = gradient_sums(X, r);
  double worst = std::abs(r.sum());
  for (int j = 0; j < groups.group_count(); ++j) {
    double sq = 0.0;
    for (Index m : groups.members(j)) sq += theta.beta[m] * theta.beta[m];
    const double norm = std::sqrt(sq);
    for (Index k : groups.members(j)) {
      const double b = theta.beta[k];
      double v;
      if (norm == 0.0) {
        v = std::abs(G[k]) - (lambda1 + lambda2);
      } else if (b == 0.0) {
        v = std::abs(G[k]) - lambda1;
      } else {
        v = std::abs(G[k] - lambda1 * (b > 0.0 ? 1.0 : -1.0) - lambda2 * b / norm);
      }
      worst = std::max(worst, v);
    }
  }
  return worst;
}

FitResult fit_group(const DesignMatrix& X, const Vector& y, double lambda1, double lambda2,
                    const GroupStructure& groups, const FitConfig& config,
                    const std::optional<ParameterVector>& warm_start) {
  config.validate();
  const PenaltySpec penalty = PenaltySpec::group(lambda1, lambda2, groups);
  GroupFitState state(X, y, detail::initial_theta(X, y, warm_start), groups);
  const double tol = tol_kkt(lambda1 + lambda2);
  detail::FitRecorder rec(config.trace);
  detail::warn_zero_variance(X, rec.result);

  double f_prev = objective_from_residuals(Loss::L2, state.residual.r(), state.theta.beta, penalty);
  rec.record(f_prev);
  for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    rec.result.sweeps = sweep;
    update_mu_l2(X, state.residual, state.theta);
    ++rec.result.updates;
    rec.result.visits += 1 + X.cols();
    for (Index k = 0; k < X.cols(); ++k) {
      const double old = state.theta.beta[k];
      const auto next = update_group_coordinate(X, state, groups, k, lambda1, lambda2);
      if (next && *next != old) ++rec.result.updates;
    }
    if (state.residual.note_sweep()) state.residual.recompute(X, state.theta);

    double f = objective_from_residuals(Loss::L2, state.residual.r(), state.theta.beta, penalty);
    if (detail::relative_change(f_prev, f) < config.tol_obj) {
      state.residual.recompute(X, state.theta);
      f = objective_from_residuals(Loss::L2, state.residual.r(), state.theta.beta, penalty);
      if (kkt_violation_group(X, state.residual.r(), state.theta, groups, lambda1, lambda2) <= tol) {
        rec.record(f);
        rec.result.converged = true;
        break;
      }
    }
    rec.record(f);
    f_prev = f;
  }
  rec.result.theta = std::move(state.theta);
  detail::finalize(rec.result, Loss::L2, X, y, penalty);
  return std::move(rec.result);
}

}  // namespace lassocd
