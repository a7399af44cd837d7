#pragma once

#include "lassocd/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace lassocd::detail {

struct FitRecorder {
  explicit FitRecorder(bool trace) {
    if (trace) result.trace.emplace();
  }
  void record(double f) {
    if (result.trace) result.trace->push_back(f);
  }
  FitResult result;
};

inline double relative_change(double f_prev, double f) {
  return (f_prev - f) / std::max(std::abs(f), std::numeric_limits<double>::min());
}

inline void warn_zero_variance(const DesignMatrix& X, FitResult& result) {
  for (Index k = 0; k < X.cols(); ++k) {
    if (X.col_sumsq(k) == 0.0) {
      result.warnings.push_back("predictor " + X.name(k) + " has zero variance; coordinate skipped");
    }
  }
}

inline ParameterVector initial_theta(const DesignMatrix& X, const Vector& y,
                                     const std::optional<ParameterVector>& warm_start) {
  require_same_rows(X, y);
  require_finite(y, "response");
  if (!warm_start) return ParameterVector::zeros(X.cols());
  if (warm_start->size() != X.cols()) throw DimensionError("warm start length does not match predictor count");
  require_finite(warm_start->beta, "warm start");
  if (!std::isfinite(warm_start->mu)) throw NonFiniteError("warm start intercept is not finite");
  ParameterVector theta = *warm_start;
  // Coordinates that can never move stay at zero.
  for (Index k = 0; k < X.cols(); ++k) {
    if (X.col_sumsq(k) == 0.0) theta.beta[k] = 0.0;
  }
  return theta;
}

/// Fills active set and recomputes the objective from scratch.
inline void finalize(FitResult& result, Loss loss, const DesignMatrix& X, const Vector& y,
                     const PenaltySpec& penalty) {
  result.active_set = active_set(result.theta.beta);
  result.objective = objective(loss, X, y, result.theta, penalty);
}

}  // namespace lassocd::detail
