#pragma once

#include "lassocd/core.hpp"
#include "lassocd/l2_solver.hpp"

#include <optional>

namespace lassocd {

/// Concave-square-root majorizer of ||gamma||_2 anchored at gamma_m:
///   ||gamma_m|| + (||gamma||^2 - ||gamma_m||^2) / (2 ||gamma_m||)
/// which is >= ||gamma||_2 everywhere and equal at gamma = gamma_m.
/// Throws std::domain_error for a zero anchor.
double majorize_norm(const Vector& gamma, const Vector& gamma_m);

/// Group members whose norm falls below this are treated as exactly zero.
inline constexpr double kZeroAnchorNorm = 1e-10;

struct GroupFitState {
  GroupFitState(const DesignMatrix& X, const Vector& y, ParameterVector theta, const GroupStructure& groups);

  ParameterVector theta;
  Vector group_norms;
  ResidualState residual;

  double member_norm(const GroupStructure& groups, int group) const;
  void refresh_norm(const GroupStructure& groups, int group);
};

/// One coordinate step for beta_k in its group. With the rest of the group
/// at zero the objective in beta_k is an ordinary lasso problem with
/// lambda1 + lambda2; otherwise the group norm is majorized at the current
/// iterate and the surrogate (a ridge-augmented lasso problem with lambda1) is
/// minimized exactly. Returns std::nullopt for a zero-variance column.
std::optional<double> update_group_coordinate(const DesignMatrix& X, GroupFitState& state,
                                              const GroupStructure& groups, Index k, double lambda1, double lambda2);

/// Value of the one-dimensional majorizing surrogate in beta_k at `value`,
/// anchored at the current state. Exposed for tests.
double group_surrogate(const DesignMatrix& X, const GroupFitState& state, const GroupStructure& groups, Index k,
                       double lambda1, double lambda2, double value);

/// Largest violation of the coordinate-wise group stationarity conditions.
double kkt_violation_group(const DesignMatrix& X, const Vector& r, const ParameterVector& theta,
                           const GroupStructure& groups, double lambda1, double lambda2);

/// Cyclic coordinate descent for least squares with penalty
/// lambda2 sum_j ||gamma_j||_2 + lambda1 sum_j ||gamma_j||_1 (intercept
/// unpenalized).
FitResult fit_group(const DesignMatrix& X, const Vector& y, double lambda1, double lambda2,
                    const GroupStructure& groups, const FitConfig& config = {},
                    const std::optional<ParameterVector>& warm_start = std::nullopt);

}  // namespace lassocd
