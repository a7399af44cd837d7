#pragma once

#include "lassocd/core.hpp"
#include "lassocd/l2_solver.hpp"

#include <optional>
#include <span>

namespace lassocd {

struct WeightedPoint {
  double z;
  double w;
};

/// Order statistic z_[i] with sum_{j<i} w_[j] < W/2 <= sum_{j<=i} w_[j].
/// Throws on empty input or a non-positive weight.
double weighted_median(std::span<const WeightedPoint> points);

/// Coordinate directional derivatives of the l1 loss g, slot 0 = intercept.
/// The penalty part is added on query so the table only changes when a
/// residual changes sign class (positive, zero, negative).
class L1DerivativeTable {
 public:
  L1DerivativeTable(const DesignMatrix& X, const ResidualState& state);

  void rebuild(const DesignMatrix& X, const ResidualState& state);

  /// Moves row i from sign class `from` to `to`. `x` is x_i (length p).
  void move_row(const Eigen::Ref<const Vector>& x, int from, int to);

  /// Directional derivative of f = g + lambda |beta|_1.
  double forward(CoordinateId c, const ParameterVector& theta, double lambda) const;
  double backward(CoordinateId c, const ParameterVector& theta, double lambda) const;

  const Vector& loss_forward() const { return forward_; }
  const Vector& loss_backward() const { return backward_; }

  static double contribution_forward(double x, int sign) {
    return sign > 0 ? -x : (sign < 0 ? x : std::abs(x));
  }
  static double contribution_backward(double x, int sign) {
    return sign > 0 ? x : (sign < 0 ? -x : std::abs(x));
  }

 private:
  Vector forward_;
  Vector backward_;
};

/// Sets mu to the (lower) median of y - X beta.
double update_mu_l1(const DesignMatrix& X, ResidualState& state, ParameterVector& theta);

/// Weighted median over z_i = (r_i + x_ik beta_k) / x_ik with weights |x_ik|
/// (rows with x_ik = 0 excluded) plus the pseudo-residual point (0, lambda).
/// Returns std::nullopt when the column is all zero and lambda = 0.
std::optional<double> update_beta_k_l1(const DesignMatrix& X, ResidualState& state, ParameterVector& theta, Index k,
                                       double lambda);

/// Lasso-penalized least absolute deviation regression by greedy or cyclic
/// Edgeworth coordinate descent. `converged` means every coordinate
/// directional derivative is >= -tol_kkt; that is a coordinate-wise
/// stationary point, which for l1 need not be a global minimum.
FitResult fit_l1(const DesignMatrix& X, const Vector& y, double lambda, const FitConfig& config = {},
                 const std::optional<ParameterVector>& warm_start = std::nullopt);

}  // namespace lassocd
