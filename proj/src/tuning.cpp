#include "lassocd/tuning.hpp"

#include "lassocd/group_solver.hpp"
#include "lassocd/l1_solver.hpp"
#include "lassocd/l2_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace lassocd {

const char* to_string(GroupSlice slice) {
  switch (slice) {
    case GroupSlice::None: return "none";
    case GroupSlice::Lambda1Zero: return "lambda1=0";
    case GroupSlice::Lambda2Zero: return "lambda2=0";
    case GroupSlice::Equal: return "lambda1=lambda2";
  }
  return "?";
}

PenaltySpec SolverFamily::penalty_at(double t, GroupSlice slice) const {
  if (!groups) return PenaltySpec::lasso(t);
  switch (slice) {
    case GroupSlice::Lambda1Zero: return PenaltySpec::group(0.0, t, *groups);
    case GroupSlice::Lambda2Zero: return PenaltySpec::group(t, 0.0, *groups);
    case GroupSlice::Equal: return PenaltySpec::group(t, t, *groups);
    case GroupSlice::None: break;
  }
  throw std::invalid_argument("group family needs a slice");
}

FitResult fit_family(const SolverFamily& family, const DesignMatrix& X, const Vector& y, const PenaltySpec& penalty,
                     const std::optional<ParameterVector>& warm_start) {
  if (const auto* g = penalty.as_group()) {
    if (family.loss != Loss::L2) throw std::invalid_argument("group penalty requires l2 loss");
    return fit_group(X, y, g->lambda1, g->lambda2, g->groups, family.config, warm_start);
  }
  const double lambda = penalty.as_lasso()->lambda;
  return family.loss == Loss::L1 ? fit_l1(X, y, lambda, family.config, warm_start)
                                 : fit_l2(X, y, lambda, family.config, warm_start);
}

namespace {

double lower_median(Vector v) {
  std::sort(v.data(), v.data() + v.size());
  return v[(v.size() - 1) / 2];
}

}  // namespace

FitResult reestimate_active(Loss loss, const DesignMatrix& X, const Vector& y, std::span<const Index> active,
                            const std::optional<GroupStructure>& groups, const FitConfig& base) {
  return reestimate_active(loss, X, y, active, groups, base, std::nullopt);
}

FitResult reestimate_active(Loss loss, const DesignMatrix& X, const Vector& y, std::span<const Index> active,
                            const std::optional<GroupStructure>& groups, const FitConfig& base,
                            const std::optional<ParameterVector>& warm_start) {
  require_same_rows(X, y);
  if (groups && groups->predictor_count() != X.cols()) {
    throw DimensionError("group structure does not match predictor count");
  }
  for (Index k : active) {
    if (k < 0 || k >= X.cols()) throw std::out_of_range("active index out of range");
  }
  const PenaltySpec none = PenaltySpec::lasso(0.0);
  FitResult out;
  out.theta = ParameterVector::zeros(X.cols());

  if (active.empty()) {
    out.theta.mu = loss == Loss::L2 ? y.mean() : lower_median(y);
    out.converged = true;
    out.objective = objective(loss, X, y, out.theta, none);
    return out;
  }

  FitConfig config = base;
  config.tol_obj = base.tol_obj / 100.0;
  config.trace = false;
  config.certify_descent = false;
  const DesignMatrix sub = X.select_cols(active);
  std::optional<ParameterVector> warm;
  if (warm_start) {
    ParameterVector w = ParameterVector::zeros(sub.cols());
    w.mu = warm_start->mu;
    for (std::size_t j = 0; j < active.size(); ++j) w.beta[static_cast<Index>(j)] = warm_start->beta[active[j]];
    warm = std::move(w);
  }
  FitResult sub_fit = loss == Loss::L1 ? fit_l1(sub, y, 0.0, config, warm) : fit_l2(sub, y, 0.0, config, warm);

  out.theta.mu = sub_fit.theta.mu;
  for (std::size_t j = 0; j < active.size(); ++j) out.theta.beta[active[j]] = sub_fit.theta.beta[static_cast<Index>(j)];
  out.converged = sub_fit.converged;
  out.stalled = sub_fit.stalled;
  out.sweeps = sub_fit.sweeps;
  out.updates = sub_fit.updates;
  out.visits = sub_fit.visits;
  out.warnings = std::move(sub_fit.warnings);
  out.active_set = lassocd::active_set(out.theta.beta);
  out.objective = objective(loss, X, y, out.theta, none);
  return out;
}

double prediction_error(Loss loss, const DesignMatrix& X, const Vector& y, const ParameterVector& theta) {
  require_same_rows(X, y);
  Vector r = y;
  r.array() -= theta.mu;
  for (Index k = 0; k < theta.beta.size(); ++k) {
    if (theta.beta[k] != 0.0) r.noalias() -= theta.beta[k] * X.col(k);
  }
  const double n = static_cast<double>(r.size());
  return loss == Loss::L1 ? r.lpNorm<1>() / n : r.squaredNorm() / n;
}

// ---------------------------------------------------------------------------
// Folds

std::vector<Index> FoldAssignment::holdout(int fold) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) out.push_back(static_cast<Index>(i));
  }
  return out;
}

std::vector<Index> FoldAssignment::training(int fold) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) out.push_back(static_cast<Index>(i));
  }
  return out;
}

FoldAssignment kfold_split(Index n, int k, std::uint64_t seed) {
  if (k < 2 || static_cast<Index>(k) > n) {
    throw std::invalid_argument("fold count must satisfy 2 <= k <= n (k = " + std::to_string(k) + ")");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldAssignment folds;
  folds.k = k;
  folds.seed = seed;
  folds.assignment.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    folds.assignment[static_cast<std::size_t>(order[i])] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Cross-validation

namespace {

struct FoldData {
  DesignMatrix train_X;
  Vector train_y;
  DesignMatrix test_X;
  Vector test_y;
};

Vector select(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = v[idx[i]];
  return out;
}

FoldData make_fold(const DesignMatrix& X, const Vector& y, const FoldAssignment& folds, int f) {
  const auto train = folds.training(f);
  const auto test = folds.holdout(f);
  return {X.select_rows(train), select(y, train), X.select_rows(test), select(y, test)};
}

template <typename FoldRange>
CvCurvePoint evaluate_folds(const SolverFamily& family, const PenaltySpec& penalty, const FoldRange& data,
                            const std::vector<ParameterVector>* warm, std::vector<ParameterVector>* thetas_out) {
  CvCurvePoint point;
  if (const auto* l = penalty.as_lasso()) {
    point.lambda = point.lambda1 = l->lambda;
  } else {
    point.lambda1 = penalty.as_group()->lambda1;
    point.lambda2 = penalty.as_group()->lambda2;
  }
  if (thetas_out) thetas_out->clear();
  double nonzero = 0.0;
  std::size_t f = 0;
  for (const auto& fold : data) {
    std::optional<ParameterVector> start;
    if (warm && f < warm->size()) start = (*warm)[f];
    FitResult fit = fit_family(family, fold.train_X, fold.train_y, penalty, start);
    bool converged = fit.converged;
    nonzero += static_cast<double>(fit.active_set.size());
    ParameterVector scored = fit.theta;
    if (family.reestimate) {
      FitResult re = reestimate_active(family.loss, fold.train_X, fold.train_y, fit.active_set, family.groups,
                                       family.config, fit.theta);
      converged = converged && re.converged;
      scored = re.theta;
    }
    point.per_fold_errors.push_back(prediction_error(family.loss, fold.test_X, fold.test_y, scored));
    point.fold_converged.push_back(converged);
    point.flagged = point.flagged || !converged;
    if (thetas_out) thetas_out->push_back(std::move(fit.theta));
    ++f;
  }
  const double k = static_cast<double>(point.per_fold_errors.size());
  point.cv_error = std::accumulate(point.per_fold_errors.begin(), point.per_fold_errors.end(), 0.0) / k;
  point.mean_nonzero = nonzero / k;
  return point;
}

}  // namespace

CvCurvePoint cv_error(const SolverFamily& family, const DesignMatrix& X, const Vector& y, const PenaltySpec& penalty,
                      const FoldAssignment& folds, const std::vector<ParameterVector>* warm_starts,
                      std::vector<ParameterVector>* thetas_out) {
  require_same_rows(X, y);
  if (static_cast<Index>(folds.assignment.size()) != X.rows()) throw DimensionError("fold assignment length mismatch");
  std::vector<FoldData> data;
  for (int f = 0; f < folds.k; ++f) data.push_back(make_fold(X, y, folds, f));
  return evaluate_folds(family, penalty, data, warm_starts, thetas_out);
}

CvEvaluator::CvEvaluator(SolverFamily family, const DesignMatrix& X, const Vector& y, FoldAssignment folds,
                         GroupSlice slice)
    : family_(std::move(family)), folds_(std::move(folds)), slice_(slice) {
  require_same_rows(X, y);
  if (static_cast<Index>(folds_.assignment.size()) != X.rows()) {
    throw DimensionError("fold assignment length mismatch");
  }
  if (family_.is_group() && slice_ == GroupSlice::None) throw std::invalid_argument("group family needs a slice");
  for (int f = 0; f < folds_.k; ++f) {
    FoldData d = make_fold(X, y, folds_, f);
    data_.push_back({std::move(d.train_X), std::move(d.train_y), std::move(d.test_X), std::move(d.test_y)});
  }
}

const CvCurvePoint& CvEvaluator::evaluate(double t) {
  if (auto it = memo_.find(t); it != memo_.end()) return it->second.point;
  const std::vector<ParameterVector>* warm = nullptr;
  if (auto above = memo_.upper_bound(t); above != memo_.end()) warm = &above->second.thetas;
  Entry entry;
  entry.point = evaluate_folds(family_, family_.penalty_at(t, slice_), data_, warm, &entry.thetas);
  entry.point.lambda = t;
  ++evaluations_;
  return memo_.emplace(t, std::move(entry)).first->second.point;
}

std::vector<CvCurvePoint> CvEvaluator::curve() const {
  std::vector<CvCurvePoint> out;
  for (auto it = memo_.rbegin(); it != memo_.rend(); ++it) out.push_back(it->second.point);
  return out;
}

// ---------------------------------------------------------------------------
// Scalar search

Bracket bracket(const ScalarCurve& c, double lambda0, double r, double floor_ratio) {
  if (!(lambda0 > 0.0) || !std::isfinite(lambda0)) throw std::invalid_argument("bracket: lambda0 must be > 0");
  if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("bracket: r must lie in (0, 1)");
  Bracket out;
  const double floor = lambda0 * floor_ratio;
  double previous = lambda0;
  double current = lambda0;
  double c_current = c(current);
  out.evaluated.push_back(current);
  for (int k = 0;; ++k) {
    const double next = current * r;
    if (next < floor) {
      out.high = previous;
      out.mid = current;
      out.low = next;
      return out;
    }
    const double c_next = c(next);
    out.evaluated.push_back(next);
    if (c_next > c_current) {
      if (k == 0) {
        out.high = lambda0;
        out.mid = lambda0 * r;
        out.low = lambda0 * r * r;
        out.first_step_increase = true;
        return out;
      }
      out.high = previous;
      out.mid = current;
      out.low = next;
      out.found = true;
      return out;
    }
    previous = current;
    current = next;
    c_current = c_next;
  }
}

GoldenResult golden_section(const ScalarCurve& c, double low, double high, double tol_rel) {
  if (!(low < high)) throw std::invalid_argument("golden_section: need low < high");
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double stop = std::max(tol_rel, 1e-12) * high;
  GoldenResult out;
  double a = low;
  double b = high;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = c(x1);
  double f2 = c(x2);
  out.evaluations = 2;
  out.intervals.emplace_back(a, b);
  while (b - a >= stop) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = c(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = c(x2);
    }
    ++out.evaluations;
    out.intervals.emplace_back(a, b);
  }
  out.argmin = 0.5 * (a + b);
  return out;
}

ScalarSearchResult search_scalar(const ScalarCurve& c, const SearchSpec& spec, double default_lambda0) {
  ScalarSearchResult out;
  if (const auto* grid = std::get_if<GridSpec>(&spec)) {
    if (grid->lambdas.empty()) throw std::invalid_argument("empty lambda grid");
    std::vector<double> lambdas = grid->lambdas;
    std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
    std::size_t best = 0;
    std::vector<double> values;
    for (double t : lambdas) {
      if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("grid lambdas must be finite and >= 0");
      values.push_back(c(t));
      out.bracket.evaluated.push_back(t);
    }
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (values[i] < values[best]) best = i;
    }
    out.best = lambdas[best];
    out.best_value = values[best];
    out.bracket.high = lambdas[best == 0 ? 0 : best - 1];
    out.bracket.mid = lambdas[best];
    out.bracket.low = lambdas[std::min(best + 1, lambdas.size() - 1)];
    out.bracket.found = best > 0 && best + 1 < lambdas.size();
    return out;
  }

  const auto& bg = std::get<BracketGoldenSpec>(spec);
  const double lambda0 = bg.lambda0.value_or(default_lambda0);
  std::map<double, double> seen;
  const ScalarCurve tracked = [&](double t) {
    auto it = seen.find(t);
    if (it == seen.end()) it = seen.emplace(t, c(t)).first;
    return it->second;
  };

  std::vector<double> walked;
  Bracket br = bracket(tracked, lambda0, bg.r, bg.floor_ratio);
  walked.insert(walked.end(), br.evaluated.begin(), br.evaluated.end());
  // Just below the all-zero regime a single spurious entrant can raise c
  // before the real drop; keep walking from the step that went up.
  while (br.first_step_increase && br.mid * bg.r >= lambda0 * bg.floor_ratio) {
    br = bracket(tracked, br.mid, bg.r, bg.floor_ratio * lambda0 / br.mid);
    walked.insert(walked.end(), br.evaluated.begin() + 1, br.evaluated.end());
  }
  br.evaluated = std::move(walked);
  out.bracket = br;

  const GoldenResult golden = golden_section(tracked, br.low, br.high, bg.tol_rel);
  tracked(golden.argmin);
  auto best = seen.rbegin();
  for (auto it = seen.rbegin(); it != seen.rend(); ++it) {
    if (it->second < best->second) best = it;
  }
  out.best = best->first;
  out.best_value = best->second;
  return out;
}

double default_lambda0(Loss loss, const DesignMatrix& X, const Vector& y) {
  require_same_rows(X, y);
  Vector weights(y.size());
  if (loss == Loss::L2) {
    weights = y.array() - y.mean();
  } else {
    const double med = lower_median(y);
    for (Index i = 0; i < y.size(); ++i) {
      const double r = y[i] - med;
      weights[i] = std::abs(r) <= 1e-12 * (1.0 + std::abs(y[i])) ? 0.0 : (r > 0.0 ? 1.0 : -1.0);
    }
  }
  const double threshold = (X.values().transpose() * weights).cwiseAbs().maxCoeff();
  return threshold > 0.0 ? 2.0 * threshold : 1.0;
}

TuningResult tune(const SolverFamily& family, const DesignMatrix& X, const Vector& y, const SearchSpec& search,
                  const FoldAssignment& folds, std::vector<GroupSlice> slices) {
  if (slices.empty()) {
    if (family.is_group()) slices = {GroupSlice::Lambda1Zero, GroupSlice::Lambda2Zero, GroupSlice::Equal};
    else slices = {GroupSlice::None};
  }
  const double lambda0 = default_lambda0(family.is_group() ? Loss::L2 : family.loss, X, y);

  TuningResult out;
  bool have = false;
  for (GroupSlice slice : slices) {
    CvEvaluator evaluator(family, X, y, folds, slice);
    const ScalarSearchResult found = search_scalar([&](double t) { return evaluator(t); }, search, lambda0);
    if (!have || found.best_value < out.best_cv_error) {
      have = true;
      out.best_lambda = found.best;
      out.best_cv_error = found.best_value;
      out.bracket = found.bracket;
      out.slice = slice;
      out.curve = evaluator.curve();
    }
  }

  const PenaltySpec penalty = family.penalty_at(out.best_lambda, out.slice);
  if (const auto* g = penalty.as_group()) {
    out.best_lambda1 = g->lambda1;
    out.best_lambda2 = g->lambda2;
  } else {
    out.best_lambda1 = out.best_lambda;
  }
  out.penalized = fit_family(family, X, y, penalty);
  if (family.reestimate) {
    out.refit = reestimate_active(family.loss, X, y, out.penalized.active_set, family.groups, family.config,
                                  out.penalized.theta);
  } else {
    out.refit = out.penalized;
  }
  return out;
}

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}
}  // namespace

void write_curve_tsv(std::ostream& out, const std::vector<CvCurvePoint>& curve, bool group) {
  std::size_t folds = 0;
  for (const auto& pt : curve) folds = std::max(folds, pt.per_fold_errors.size());
  out << (group ? "lambda1\tlambda2" : "lambda") << "\tcv_error\tmean_nonzero";
  for (std::size_t f = 0; f < folds; ++f) out << "\tfold_" << (f + 1);
  out << '\n';
  for (const auto& pt : curve) {
    if (group) out << fmt(pt.lambda1) << '\t' << fmt(pt.lambda2);
    else out << fmt(pt.lambda);
    out << '\t' << fmt(pt.cv_error) << '\t' << fmt(pt.mean_nonzero);
    for (double e : pt.per_fold_errors) out << '\t' << fmt(e);
    out << '\n';
  }
}

}  // namespace lassocd
