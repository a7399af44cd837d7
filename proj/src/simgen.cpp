#include "lassocd/simgen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lassocd {

const char* to_string(Noise noise) { return noise == Noise::Normal ? "normal" : "laplace"; }

void SimConfig::validate() const {
  if (p < 1) throw std::invalid_argument("p must be >= 1");
  if (n < 2) throw std::invalid_argument("n must be >= 2");
  if (n_test < 1) throw std::invalid_argument("n_test must be >= 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
  if (correlated < 0) throw std::invalid_argument("correlated must be >= 0");
  if (!beta_true.empty() && static_cast<Index>(beta_true.size()) != p) {
    throw DimensionError("beta_true has " + std::to_string(beta_true.size()) + " entries, expected p = " +
                         std::to_string(p));
  }
  if (!std::isfinite(mu_true)) throw NonFiniteError("mu_true must be finite");
  for (double b : beta_true) {
    if (!std::isfinite(b)) throw NonFiniteError("beta_true must be finite");
  }
}

Vector SimConfig::beta() const {
  if (!beta_true.empty()) return Eigen::Map<const Vector>(beta_true.data(), static_cast<Index>(beta_true.size()));
  Vector b = Vector::Zero(p);
  b.head(std::min<Index>(5, p)).setOnes();
  return b;
}

ParameterVector SimConfig::truth() const { return {mu_true, beta()}; }

std::vector<Index> SimConfig::true_support() const { return active_set(beta()); }

namespace {

enum class Stream : std::uint32_t { Factor = 0, Column = 1, Noise = 2 };

std::mt19937_64 stream_rng(const SimConfig& config, SampleRole role, Stream kind, Index j) {
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(role), static_cast<std::uint32_t>(kind),
                    static_cast<std::uint32_t>(j)};
  return std::mt19937_64(seq);
}

Vector standard_normals(std::mt19937_64 rng, Index rows) {
  std::normal_distribution<double> dist;
  Vector z(rows);
  for (Index i = 0; i < rows; ++i) z[i] = dist(rng);
  return z;
}

// Inverse CDF of the unit Laplace law.
double laplace_quantile(double u) {
  const double c = u - 0.5;
  return c < 0.0 ? std::log1p(2.0 * c) : -std::log1p(-2.0 * c);
}

}  // namespace

Vector gen_column(const SimConfig& config, SampleRole role, Index j, Index rows) {
  if (j < 0 || j >= config.p) throw std::out_of_range("column index out of range");
  Vector z = standard_normals(stream_rng(config, role, Stream::Column, j), rows);
  if (j < config.correlated && config.rho > 0.0) {
    const Vector z0 = standard_normals(stream_rng(config, role, Stream::Factor, 0), rows);
    z = std::sqrt(config.rho) * z0 + std::sqrt(1.0 - config.rho) * z;
  }
  return z;
}

DesignMatrix gen_design(const SimConfig& config, SampleRole role) {
  config.validate();
  const Index rows = role == SampleRole::Train ? config.n : config.n_test;
  Matrix X(rows, config.p);
  for (Index j = 0; j < config.p; ++j) X.col(j) = gen_column(config, role, j, rows);
  return DesignMatrix(std::move(X));
}

Vector gen_noise(const SimConfig& config, SampleRole role, Index rows) {
  if (config.noise_free) return Vector::Zero(rows);
  auto rng = stream_rng(config, role, Stream::Noise, 0);
  if (config.noise == Noise::Normal) return standard_normals(std::move(rng), rows);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector eps(rows);
  for (Index i = 0; i < rows; ++i) {
    double u;
    do u = unif(rng);
    while (u == 0.0);
    eps[i] = laplace_quantile(u);
  }
  return eps;
}

Vector gen_response(const DesignMatrix& X, const SimConfig& config, SampleRole role) {
  config.validate();
  if (X.cols() != config.p) throw DimensionError("design has the wrong number of columns");
  const Vector beta = config.beta();
  Vector y = gen_noise(config, role, X.rows());
  y.array() += config.mu_true;
  for (Index k = 0; k < beta.size(); ++k) {
    if (beta[k] != 0.0) y.noalias() += beta[k] * X.col(k);
  }
  return y;
}

LazyTestSet::LazyTestSet(const SimConfig& config) : config_(config) {
  config_.validate();
  const Vector beta = config_.beta();
  y_ = gen_noise(config_, SampleRole::Test, config_.n_test);
  y_.array() += config_.mu_true;
  for (Index k : config_.true_support()) y_.noalias() += beta[k] * column(k);
}

const Vector& LazyTestSet::column(Index j) {
  auto it = columns_.find(j);
  if (it == columns_.end()) {
    it = columns_.emplace(j, gen_column(config_, SampleRole::Test, j, config_.n_test)).first;
  }
  return it->second;
}

double LazyTestSet::error(Loss loss, const ParameterVector& theta) {
  if (theta.beta.size() != config_.p) throw DimensionError("parameter vector has the wrong length");
  Vector r = y_;
  r.array() -= theta.mu;
  for (Index k = 0; k < theta.beta.size(); ++k) {
    if (theta.beta[k] != 0.0) r.noalias() -= theta.beta[k] * column(k);
  }
  const double n = static_cast<double>(r.size());
  return loss == Loss::L1 ? r.lpNorm<1>() / n : r.squaredNorm() / n;
}

double evaluate(Loss loss, const ParameterVector& theta_hat, const DesignMatrix& X_test, const Vector& y_test) {
  if (theta_hat.beta.size() != X_test.cols()) throw DimensionError("parameter vector has the wrong length");
  return prediction_error(loss, X_test, y_test, theta_hat);
}

// ---------------------------------------------------------------------------
// Studies

std::uint64_t replicate_seed(std::uint64_t study_seed, int replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(study_seed), static_cast<std::uint32_t>(study_seed >> 32),
                    static_cast<std::uint32_t>(replicate), 0x5eedu};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

// Test error of the re-estimated full-data fit as a function of lambda, with
// warm starts from the nearest larger evaluated lambda.
class TestErrorCurve {
 public:
  TestErrorCurve(const SolverFamily& family, const DesignMatrix& X, const Vector& y, LazyTestSet& test)
      : family_(family), X_(X), y_(y), test_(test) {}

  double operator()(double t) {
    if (auto it = memo_.find(t); it != memo_.end()) return it->second.first;
    std::optional<ParameterVector> warm;
    if (auto above = memo_.upper_bound(t); above != memo_.end()) warm = above->second.second;
    const PenaltySpec penalty = family_.penalty_at(t, family_.is_group() ? GroupSlice::Equal : GroupSlice::None);
    FitResult fit = fit_family(family_, X_, y_, penalty, warm);
    ParameterVector scored = fit.theta;
    if (family_.reestimate) {
      scored = reestimate_active(family_.loss, X_, y_, fit.active_set, family_.groups, family_.config, fit.theta)
                   .theta;
    }
    const double e = test_.error(family_.loss, scored);
    memo_.emplace(t, std::make_pair(e, std::move(fit.theta)));
    return e;
  }

 private:
  const SolverFamily& family_;
  const DesignMatrix& X_;
  const Vector& y_;
  LazyTestSet& test_;
  std::map<double, std::pair<double, ParameterVector>> memo_;
};

}  // namespace

ReplicateRow run_replicate(const SimConfig& config, const SolverFamily& family, const SearchSpec& search,
                           const StudyOptions& options, int replicate) {
  ReplicateRow row;
  row.replicate = replicate;
  row.seed = replicate_seed(config.seed, replicate);
  try {
    SimConfig cfg = config;
    cfg.seed = row.seed;
    cfg.validate();
    const DesignMatrix X = gen_design(cfg, SampleRole::Train);
    const Vector y = gen_response(X, cfg, SampleRole::Train);
    LazyTestSet test(cfg);
    const FoldAssignment folds = kfold_split(cfg.n, options.folds, row.seed ^ 0x9e3779b97f4a7c15ull);

    const TuningResult tuned = tune(family, X, y, search, folds);
    row.lambda_star = tuned.best_lambda;
    row.test_error_true = test.error(family.loss, cfg.truth());
    row.test_error_fit = test.error(family.loss, tuned.refit.theta);
    row.n_nonzero = static_cast<int>(tuned.refit.active_set.size());
    const Vector beta = cfg.beta();
    for (Index k : tuned.refit.active_set) row.n_true += beta[k] != 0.0 ? 1 : 0;
    const bool capped = tuned.penalized.hit_cap() || tuned.refit.hit_cap();
    const bool stalled = !tuned.penalized.converged || !tuned.refit.converged;
    for (const auto& pt : tuned.curve) row.cv_flagged += pt.flagged ? 1 : 0;

    if (options.timing) {
      const PenaltySpec penalty = family.penalty_at(tuned.best_lambda, tuned.slice);
      const auto start = std::chrono::steady_clock::now();
      (void)fit_family(family, X, y, penalty);
      row.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    if (options.test_optimal_lambda) {
      TestErrorCurve curve(family, X, y, test);
      BracketGoldenSpec spec;
      if (const auto* bg = std::get_if<BracketGoldenSpec>(&search)) spec = *bg;
      spec.lambda0.reset();
      const double lambda0 = default_lambda0(family.is_group() ? Loss::L2 : family.loss, X, y);
      row.lambda_test_opt = search_scalar(std::ref(curve), spec, lambda0).best;
    }
    row.status = capped ? "cap" : stalled ? "stalled" : "ok";
  } catch (const std::exception& e) {
    const double nan = std::nan("");
    row.lambda_star = row.test_error_true = row.test_error_fit = row.fit_seconds = nan;
    row.n_nonzero = row.n_true = 0;
    row.lambda_test_opt.reset();
    row.status = std::string("failed: ") + e.what();
  }
  return row;
}

StudyResult replicate_study(const SimConfig& config, const SolverFamily& family, const SearchSpec& search,
                            int replicates, const StudyOptions& options) {
  if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  config.validate();
  StudyResult out;
  for (int r = 0; r < replicates; ++r) out.rows.push_back(run_replicate(config, family, search, options, r));
  out.summary = summarize(out.rows);
  return out;
}

namespace {

ColumnSummary summarize_column(const std::vector<double>& values) {
  ColumnSummary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / s.count;
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (s.count - 1));
    s.se = s.sd / std::sqrt(static_cast<double>(s.count));
  }
  return s;
}

template <typename Get>
ColumnSummary summarize_by(const std::vector<ReplicateRow>& rows, Get get) {
  std::vector<double> v;
  for (const auto& row : rows) {
    if (!row.failed()) v.push_back(get(row));
  }
  return summarize_column(v);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

StudySummary summarize(const std::vector<ReplicateRow>& rows) {
  StudySummary s;
  s.lambda_star = summarize_by(rows, [](const ReplicateRow& r) { return r.lambda_star; });
  s.test_error_true = summarize_by(rows, [](const ReplicateRow& r) { return r.test_error_true; });
  s.test_error_fit = summarize_by(rows, [](const ReplicateRow& r) { return r.test_error_fit; });
  s.n_nonzero = summarize_by(rows, [](const ReplicateRow& r) { return static_cast<double>(r.n_nonzero); });
  s.n_true = summarize_by(rows, [](const ReplicateRow& r) { return static_cast<double>(r.n_true); });
  s.fit_seconds = summarize_by(rows, [](const ReplicateRow& r) { return r.fit_seconds; });
  std::vector<double> opt;
  for (const auto& row : rows) {
    if (!row.failed() && row.lambda_test_opt) opt.push_back(*row.lambda_test_opt);
  }
  if (!opt.empty()) s.lambda_test_opt = summarize_column(opt);
  for (const auto& row : rows) s.failed += row.failed() ? 1 : 0;
  return s;
}

void write_study_tsv(std::ostream& out, const std::vector<ReplicateRow>& rows, const StudyOptions& options) {
  out << "replicate\tseed\tlambda_star\ttest_error_true\ttest_error_fit\tn_nonzero\tn_true";
  if (options.timing) out << "\tfit_seconds";
  if (options.test_optimal_lambda) out << "\tlambda_test_opt";
  out << "\tcv_flagged\tstatus\n";
  for (const auto& r : rows) {
    out << r.replicate << '\t' << r.seed << '\t' << fmt(r.lambda_star) << '\t' << fmt(r.test_error_true) << '\t'
        << fmt(r.test_error_fit) << '\t' << r.n_nonzero << '\t' << r.n_true;
    if (options.timing) out << '\t' << fmt(r.fit_seconds);
    if (options.test_optimal_lambda) out << '\t' << (r.lambda_test_opt ? fmt(*r.lambda_test_opt) : "nan");
    out << '\t' << r.cv_flagged << '\t' << r.status << '\n';
  }
}

void write_summary_tsv(std::ostream& out, const StudySummary& s, const StudyOptions& options) {
  out << "stat\tlambda_star\ttest_error_true\ttest_error_fit\tn_nonzero\tn_true";
  if (options.timing) out << "\tfit_seconds";
  if (options.test_optimal_lambda) out << "\tlambda_test_opt";
  out << "\tfailed\n";
  const char* names[] = {"mean", "sd", "se"};
  for (int i = 0; i < 3; ++i) {
    auto pick = [i](const ColumnSummary& c) { return i == 0 ? c.mean : (i == 1 ? c.sd : c.se); };
    out << names[i] << '\t' << fmt(pick(s.lambda_star)) << '\t' << fmt(pick(s.test_error_true)) << '\t'
        << fmt(pick(s.test_error_fit)) << '\t' << fmt(pick(s.n_nonzero)) << '\t' << fmt(pick(s.n_true));
    if (options.timing) out << '\t' << fmt(pick(s.fit_seconds));
    if (options.test_optimal_lambda) out << '\t' << (s.lambda_test_opt ? fmt(pick(*s.lambda_test_opt)) : "nan");
    out << '\t' << s.failed << '\n';
  }
}

// ---------------------------------------------------------------------------
// Config files

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
  }
  if (used != v.size()) throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
  }
  if (used != v.size()) throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
  return out;
}

}  // namespace

void set_sim_option(SimConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "p") c.p = parse_int(key, v);
  else if (key == "n") c.n = parse_int(key, v);
  else if (key == "n_test") c.n_test = parse_int(key, v);
  else if (key == "rho") c.rho = parse_double(key, v);
  else if (key == "mu_true") c.mu_true = parse_double(key, v);
  else if (key == "correlated") c.correlated = parse_int(key, v);
  else if (key == "seed") {
    if (v.empty() || v[0] == '-') throw std::invalid_argument("bad value for seed: '" + v + "'");
    std::size_t used = 0;
    c.seed = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("bad value for seed: '" + v + "'");
  } else if (key == "noise") {
    if (v == "normal") c.noise = Noise::Normal;
    else if (v == "laplace") c.noise = Noise::Laplace;
    else throw std::invalid_argument("noise must be normal or laplace, got '" + v + "'");
  } else if (key == "noise_free") {
    if (v == "true" || v == "1") c.noise_free = true;
    else if (v == "false" || v == "0") c.noise_free = false;
    else throw std::invalid_argument("noise_free must be true or false");
  } else if (key == "beta_true") {
    c.beta_true.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) c.beta_true.push_back(parse_double(key, trim(item)));
  } else {
    throw std::invalid_argument("unknown simulation key '" + key + "'");
  }
}

SimConfig parse_sim_config(std::istream& in, SimConfig base) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    set_sim_option(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  base.validate();
  return base;
}

}  // namespace lassocd
