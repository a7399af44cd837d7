#pragma once

#include "lassocd/core.hpp"

#include <optional>

namespace lassocd {

enum class Strategy { Cyclic, Greedy };

const char* to_string(Strategy strategy);

/// Shared by every coordinate-descent fit. For greedy fits one "sweep" is
/// p + 1 single-coordinate steps.
struct FitConfig {
  int max_sweeps = 1000;
  /// Relative objective change threshold.
  double tol_obj = 1e-8;
  Strategy strategy = Strategy::Cyclic;
  bool trace = false;
  /// Greedy l2 only: check f_old - f_new >= d^2 / (2b) on every step.
  bool certify_descent = false;

  void validate() const;
};

/// Sets mu to mean(y - X beta). Returns the new intercept.
double update_mu_l2(const DesignMatrix& X, ResidualState& state, ParameterVector& theta);

/// Exact minimizer of the one-dimensional problem in beta_k:
///   (1/2) sum (r_i + x_ik (beta_k - b))^2 + (ridge_aug / 2) b^2 + lambda |b|.
/// The left and right candidates
///   b- = min{0, beta_k - (dg + ridge_aug beta_k - lambda) / (c + ridge_aug)}
///   b+ = max{0, beta_k - (dg + ridge_aug beta_k + lambda) / (c + ridge_aug)}
/// with dg = -sum r_i x_ik and c = sum x_ik^2 are never both nonzero.
/// Writes the result into theta and state. Returns std::nullopt (and leaves
/// everything untouched) for a zero-variance column.
std::optional<double> update_beta_k_l2(const DesignMatrix& X, ResidualState& state, ParameterVector& theta, Index k,
                                       double lambda, double ridge_aug = 0.0);

/// Same as above with the gradient sum sum_i r_i x_ik supplied by the caller.
std::optional<double> update_beta_k_l2(const DesignMatrix& X, ResidualState& state, ParameterVector& theta, Index k,
                                       double lambda, double ridge_aug, double grad_sum);

/// Lasso-penalized least squares by cyclic or greedy coordinate descent.
FitResult fit_l2(const DesignMatrix& X, const Vector& y, double lambda, const FitConfig& config = {},
                 const std::optional<ParameterVector>& warm_start = std::nullopt);

/// Largest residual of the subgradient conditions at theta: |G_k| - lambda
/// on zeros, |G_k - lambda sign(beta_k)| on actives and |sum r| for mu, with
/// G = X^t r. Stationary within tol when the result is <= tol.
double kkt_violation_l2(const DesignMatrix& X, const Vector& r, const ParameterVector& theta, double lambda);

}  // namespace lassocd
