#pragma once

#include "lassocd/core.hpp"
#include "lassocd/l2_solver.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <variant>
#include <vector>

namespace lassocd {

// ---------------------------------------------------------------------------
// Solver family: which loss/penalty/strategy a tuning run fits.

/// One-dimensional slices through (lambda1, lambda2) for group penalties.
/// For a lasso family only `None` is meaningful.
enum class GroupSlice { None, Lambda1Zero, Lambda2Zero, Equal };

const char* to_string(GroupSlice slice);

struct SolverFamily {
  Loss loss = Loss::L2;
  FitConfig config;
  std::optional<GroupStructure> groups;
  /// Refit the active set without penalty before scoring held-out data.
  bool reestimate = true;

  bool is_group() const { return groups.has_value(); }
  /// Maps the scalar tuning constant t onto a penalty.
  PenaltySpec penalty_at(double t, GroupSlice slice) const;
};

/// Penalized fit with the family's solver.
FitResult fit_family(const SolverFamily& family, const DesignMatrix& X, const Vector& y, const PenaltySpec& penalty,
                     const std::optional<ParameterVector>& warm_start = std::nullopt);

/// Unpenalized refit on `active` plus intercept; inactive coefficients are
/// returned as exact zeros. Uses tol_obj / 100. Group structure, if any, is
/// irrelevant at zero penalty and only validated.
FitResult reestimate_active(Loss loss, const DesignMatrix& X, const Vector& y, std::span<const Index> active,
                            const std::optional<GroupStructure>& groups = std::nullopt, const FitConfig& base = {});
/// Same, warm-started from the active coefficients of `warm_start`.
FitResult reestimate_active(Loss loss, const DesignMatrix& X, const Vector& y, std::span<const Index> active,
                            const std::optional<GroupStructure>& groups, const FitConfig& base,
                            const std::optional<ParameterVector>& warm_start);

/// Mean |y - yhat| for L1, mean (y - yhat)^2 for L2.
double prediction_error(Loss loss, const DesignMatrix& X, const Vector& y, const ParameterVector& theta);

// ---------------------------------------------------------------------------
// Folds

struct FoldAssignment {
  int k = 0;
  std::vector<int> assignment;
  std::uint64_t seed = 0;

  std::vector<Index> holdout(int fold) const;
  std::vector<Index> training(int fold) const;
};

/// Balanced random partition of n cases into k folds, deterministic in seed.
FoldAssignment kfold_split(Index n, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cross-validation curve

struct CvCurvePoint {
  double lambda = 0.0;  // slice parameter t
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double cv_error = 0.0;
  double mean_nonzero = 0.0;
  std::vector<double> per_fold_errors;
  std::vector<bool> fold_converged;
  /// Some fold fit hit the iteration cap.
  bool flagged = false;
};

/// Evaluates c(t) with fold data split once. Every evaluated t is memoized;
/// a new t is warm-started from the fold solutions at the nearest larger
/// evaluated t.
class CvEvaluator {
 public:
  CvEvaluator(SolverFamily family, const DesignMatrix& X, const Vector& y, FoldAssignment folds,
              GroupSlice slice = GroupSlice::None);

  const CvCurvePoint& evaluate(double t);
  double operator()(double t) { return evaluate(t).cv_error; }

  /// Points sorted by decreasing t.
  std::vector<CvCurvePoint> curve() const;
  /// Number of non-memoized evaluations.
  int evaluations() const { return evaluations_; }
  GroupSlice slice() const { return slice_; }
  const SolverFamily& family() const { return family_; }

 private:
  struct Fold {
    DesignMatrix train_X;
    Vector train_y;
    DesignMatrix test_X;
    Vector test_y;
  };
  struct Entry {
    CvCurvePoint point;
    std::vector<ParameterVector> thetas;
  };

  SolverFamily family_;
  FoldAssignment folds_;
  GroupSlice slice_;
  std::vector<Fold> data_;
  std::map<double, Entry> memo_;
  int evaluations_ = 0;
};

/// One point of c(lambda) with optional per-fold warm starts. `thetas_out`
/// receives the penalized per-fold solutions.
CvCurvePoint cv_error(const SolverFamily& family, const DesignMatrix& X, const Vector& y, const PenaltySpec& penalty,
                      const FoldAssignment& folds,
                      const std::vector<ParameterVector>* warm_starts = nullptr,
                      std::vector<ParameterVector>* thetas_out = nullptr);

// ---------------------------------------------------------------------------
// Scalar search

struct Bracket {
  double high = 0.0;
  double mid = 0.0;
  double low = 0.0;
  /// False when c never increased (floor reached) or increased at the very
  /// first step.
  bool found = false;
  /// c already increased at the first step; (high, mid, low) is then
  /// (lambda0, lambda0 r, lambda0 r^2) and low was not evaluated.
  bool first_step_increase = false;
  std::vector<double> evaluated;
};

using ScalarCurve = std::function<double(double)>;

/// Walks lambda_k = r^k lambda0 downward until c(lambda_{k+1}) > c(lambda_k).
/// Stops at lambda0 * floor_ratio without a bracket.
Bracket bracket(const ScalarCurve& c, double lambda0, double r, double floor_ratio = 1e-6);

struct GoldenResult {
  double argmin = 0.0;
  std::vector<std::pair<double, double>> intervals;
  int evaluations = 0;
};

/// Golden-section search on (low, high); stops when the interval is narrower
/// than tol_rel * high and returns its midpoint.
GoldenResult golden_section(const ScalarCurve& c, double low, double high, double tol_rel);

// ---------------------------------------------------------------------------
// Tuning driver

struct GridSpec {
  std::vector<double> lambdas;
};

struct BracketGoldenSpec {
  double r = 0.5;
  std::optional<double> lambda0;
  double tol_rel = 1e-2;
  double floor_ratio = 1e-6;
};

using SearchSpec = std::variant<GridSpec, BracketGoldenSpec>;

struct ScalarSearchResult {
  double best = 0.0;
  double best_value = 0.0;
  Bracket bracket;
};

/// Minimizes a scalar curve with the requested strategy. Grid points are
/// visited in decreasing order; ties go to the larger lambda. The bracket
/// walk restarts one step lower whenever it stops on a first-step increase,
/// golden-section search then refines the bracket, and the best evaluated
/// lambda (ties to the larger) is returned.
ScalarSearchResult search_scalar(const ScalarCurve& c, const SearchSpec& spec, double default_lambda0);

/// Starting lambda for bracketing: twice the smallest lambda at which the
/// all-zero fit is stationary (l2: max |sum (y - ybar) x_k|;
/// l1: max |sum_{r != 0} sign(y - median) x_k|).
double default_lambda0(Loss loss, const DesignMatrix& X, const Vector& y);

struct TuningResult {
  double best_lambda = 0.0;
  double best_lambda1 = 0.0;
  double best_lambda2 = 0.0;
  GroupSlice slice = GroupSlice::None;
  double best_cv_error = 0.0;
  Bracket bracket;
  std::vector<CvCurvePoint> curve;
  /// Penalized fit on the full data at the selected penalty.
  FitResult penalized;
  /// Re-estimated fit (equals `penalized` when re-estimation is off).
  FitResult refit;
};

/// Cross-validated choice of the tuning constant. Group families search the
/// slices in `slices` (all three by default) and keep the best.
TuningResult tune(const SolverFamily& family, const DesignMatrix& X, const Vector& y, const SearchSpec& search,
                  const FoldAssignment& folds, std::vector<GroupSlice> slices = {});

/// TSV: lambda (or lambda1, lambda2), cv_error, mean_nonzero, fold_1..fold_k.
void write_curve_tsv(std::ostream& out, const std::vector<CvCurvePoint>& curve, bool group);

}  // namespace lassocd
