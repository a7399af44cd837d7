#pragma once

#include "lassocd/core.hpp"
#include "lassocd/tuning.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lassocd {

enum class Noise { Normal, Laplace };

const char* to_string(Noise noise);

/// Synthetic regression design: the first `correlated` columns share a common
/// factor with pairwise correlation rho, the rest are independent N(0, 1).
struct SimConfig {
  Index p = 2000;
  Index n = 200;
  Index n_test = 20000;
  double rho = 0.0;
  Noise noise = Noise::Normal;
  /// Empty means 1 for the first five predictors and 0 elsewhere.
  std::vector<double> beta_true;
  double mu_true = 0.0;
  std::uint64_t seed = 1;
  bool noise_free = false;
  Index correlated = 10;

  void validate() const;
  Vector beta() const;
  ParameterVector truth() const;
  /// Indices with nonzero true coefficient.
  std::vector<Index> true_support() const;
};

/// Training and test draws come from disjoint RNG streams.
enum class SampleRole { Train = 0, Test = 1 };

/// n x p design (n_test rows for the test role). Column j is produced by its
/// own stream, so any subset of columns can be regenerated independently.
DesignMatrix gen_design(const SimConfig& config, SampleRole role = SampleRole::Train);

/// One column of the design for `rows` cases.
Vector gen_column(const SimConfig& config, SampleRole role, Index j, Index rows);

/// Noise draws for `rows` cases (zeros when noise_free).
Vector gen_noise(const SimConfig& config, SampleRole role, Index rows);

/// y = mu_true + X beta_true + eps.
Vector gen_response(const DesignMatrix& X, const SimConfig& config, SampleRole role = SampleRole::Train);

/// Test sample that only materializes the columns a prediction touches.
class LazyTestSet {
 public:
  explicit LazyTestSet(const SimConfig& config);

  Index rows() const { return config_.n_test; }
  const Vector& column(Index j);
  const Vector& y() const { return y_; }

  /// Mean |y - yhat| (L1) or mean (y - yhat)^2 (L2).
  double error(Loss loss, const ParameterVector& theta);

 private:
  SimConfig config_;
  std::map<Index, Vector> columns_;
  Vector y_;
};

/// Loss-matched test error of theta_hat.
double evaluate(Loss loss, const ParameterVector& theta_hat, const DesignMatrix& X_test, const Vector& y_test);

struct ReplicateRow {
  int replicate = 0;
  std::uint64_t seed = 0;
  double lambda_star = 0.0;
  double test_error_true = 0.0;
  double test_error_fit = 0.0;
  int n_nonzero = 0;
  int n_true = 0;
  double fit_seconds = 0.0;
  std::optional<double> lambda_test_opt;
  /// Cross-validation points with a fold fit that did not converge.
  int cv_flagged = 0;
  /// "ok", "stalled" (a final full-data fit stopped before stationarity),
  /// "cap" (a final fit ran out of sweeps) or "failed: <reason>".
  std::string status = "ok";

  bool failed() const { return status.rfind("failed", 0) == 0; }
};

struct ColumnSummary {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  int count = 0;
};

struct StudySummary {
  ColumnSummary lambda_star;
  ColumnSummary test_error_true;
  ColumnSummary test_error_fit;
  ColumnSummary n_nonzero;
  ColumnSummary n_true;
  ColumnSummary fit_seconds;
  std::optional<ColumnSummary> lambda_test_opt;
  int failed = 0;
};

struct StudyOptions {
  int folds = 10;
  /// Also locate the lambda minimizing test error of the re-estimated fit.
  bool test_optimal_lambda = false;
  /// Measure the wall time of the final fit at lambda*.
  bool timing = false;
};

struct StudyResult {
  std::vector<ReplicateRow> rows;
  StudySummary summary;
};

/// Seed for replicate r, derived from the study seed.
std::uint64_t replicate_seed(std::uint64_t study_seed, int replicate);

ReplicateRow run_replicate(const SimConfig& config, const SolverFamily& family, const SearchSpec& search,
                           const StudyOptions& options, int replicate);

StudyResult replicate_study(const SimConfig& config, const SolverFamily& family, const SearchSpec& search,
                            int replicates, const StudyOptions& options = {});

StudySummary summarize(const std::vector<ReplicateRow>& rows);

/// Replicate table; fit_seconds and lambda_test_opt columns appear only when
/// requested so untimed output is reproducible byte for byte.
void write_study_tsv(std::ostream& out, const std::vector<ReplicateRow>& rows, const StudyOptions& options);
/// Rows mean / sd / se for each numeric column.
void write_summary_tsv(std::ostream& out, const StudySummary& summary, const StudyOptions& options);

/// key=value lines (# comments allowed) applied over `base`. Keys: p, n,
/// n_test, rho, noise, beta_true, mu_true, seed, noise_free, correlated.
SimConfig parse_sim_config(std::istream& in, SimConfig base = {});
/// Applies a single key/value pair; throws std::invalid_argument on unknown keys.
void set_sim_option(SimConfig& config, const std::string& key, const std::string& value);

}  // namespace lassocd
