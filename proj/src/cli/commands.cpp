#include "lassocd/cli.hpp"
#include "lassocd/simgen.hpp"
#include "lassocd/tuning.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <random>
#include <sstream>

namespace lassocd::cli {

namespace {

using json = nlohmann::ordered_json;

// Raised for data or usage problems found after argument parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitOptions {
  std::string input;
  std::optional<std::string> response;
  std::string loss = "l2";
  std::optional<std::string> strategy;
  std::optional<double> lambda;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<std::string> groups;
  bool standardize = false;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> warm_start;
  int max_sweeps = 1000;
  double tol_obj = 1e-8;
};

void add_fit_options(CLI::App& cmd, FitOptions& o, bool need_input = true) {
  if (need_input) {
    cmd.add_option("--input", o.input, "Input CSV with a header row")->required();
    cmd.add_option("--response", o.response, "Response column name or 1-based number (default: y, else first)");
  }
  cmd.add_option("--loss", o.loss, "Loss function")->check(CLI::IsMember({"l1", "l2"}));
  cmd.add_option("--strategy", o.strategy, "Coordinate order (default: greedy for l1, cyclic for l2)")
      ->check(CLI::IsMember({"cyclic", "greedy"}));
  cmd.add_option("--out", o.out, "Output path")->required();
  cmd.add_option("--seed", o.seed, "Random seed");
  cmd.add_option("--max-sweeps", o.max_sweeps, "Sweep cap per fit");
  if (need_input) {
    cmd.add_option("--groups", o.groups, "Groups CSV (predictor,group); selects the group penalty");
    cmd.add_flag("--standardize", o.standardize, "Fit on standardized columns, report original scale");
    cmd.add_option("--warm-start", o.warm_start, "Coefficient CSV to start from");
  }
}

Strategy strategy_of(const FitOptions& o) {
  if (o.strategy) return *o.strategy == "greedy" ? Strategy::Greedy : Strategy::Cyclic;
  return o.loss == "l1" ? Strategy::Greedy : Strategy::Cyclic;
}

Loss loss_of(const FitOptions& o) { return o.loss == "l1" ? Loss::L1 : Loss::L2; }

std::uint64_t resolve_seed(const FitOptions& o, std::ostream& out) {
  if (o.seed) return *o.seed;
  std::random_device rd;
  const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  out << "seed\t" << seed << '\n';
  return seed;
}

// Data and solver settings shared by fit, cv and path.
struct Problem {
  Dataset data;
  std::optional<Standardizer> standardizer;
  DesignMatrix X;  // fitting scale
  SolverFamily family;

  ParameterVector to_output(const ParameterVector& theta) const {
    return standardizer ? standardizer->to_original(theta) : theta;
  }
};

Problem load_problem(const FitOptions& o) {
  Dataset data = read_dataset(o.input, o.response);
  std::optional<Standardizer> st;
  if (o.standardize) st.emplace(data.predictors);
  DesignMatrix X = st ? st->transform(data.predictors) : data.predictors;
  SolverFamily family;
  family.loss = loss_of(o);
  family.config.max_sweeps = o.max_sweeps;
  family.config.tol_obj = o.tol_obj;
  family.config.strategy = strategy_of(o);
  family.config.validate();
  if (o.groups) {
    if (family.loss != Loss::L2) throw UsageError("--groups requires --loss l2");
    family.groups = read_groups(*o.groups, data.predictors.names());
  }
  return Problem{std::move(data), std::move(st), std::move(X), std::move(family)};
}

std::optional<ParameterVector> load_warm_start(const FitOptions& o, const Problem& prob) {
  if (!o.warm_start) return std::nullopt;
  ParameterVector theta = read_coefficients(*o.warm_start, prob.data.predictors.names());
  return prob.standardizer ? prob.standardizer->to_standardized(theta) : theta;
}

std::vector<std::string> predictor_names(const Problem& prob) {
  std::vector<std::string> names;
  for (Index k = 0; k < prob.data.predictors.cols(); ++k) names.push_back(prob.data.predictors.name(k));
  return names;
}

void write_summary(OutputStage& stage, const std::string& out, const json& summary) {
  stage.open(out + ".summary") << summary.dump() << '\n';
}

// ---------------------------------------------------------------------------
// fit

struct FitCommand {
  FitOptions o;
  bool reestimate = false;

  void attach(CLI::App& cmd) {
    add_fit_options(cmd, o);
    cmd.add_option("--lambda", o.lambda, "Lasso penalty");
    cmd.add_option("--lambda1", o.lambda1, "Group penalty: coordinate-wise part");
    cmd.add_option("--lambda2", o.lambda2, "Group penalty: group-norm part");
    cmd.add_option("--tol", o.tol_obj, "Relative objective-change tolerance");
    cmd.add_flag("--reestimate", reestimate, "Refit the active set without penalty");
  }

  int run(std::ostream& out, std::ostream& err) {
    const Problem prob = load_problem(o);
    PenaltySpec penalty = PenaltySpec::lasso(0.0);
    if (prob.family.is_group()) {
      if (o.lambda) throw UsageError("use --lambda1/--lambda2 with --groups");
      penalty = PenaltySpec::group(o.lambda1.value_or(0.0), o.lambda2.value_or(0.0), *prob.family.groups);
    } else {
      if (o.lambda1 || o.lambda2) throw UsageError("--lambda1/--lambda2 need --groups");
      if (!o.lambda) throw UsageError("--lambda is required");
      penalty = PenaltySpec::lasso(*o.lambda);
    }
    const auto warm = load_warm_start(o, prob);

    const auto start = std::chrono::steady_clock::now();
    FitResult fit = fit_family(prob.family, prob.X, prob.data.y, penalty, warm);
    bool converged = fit.converged;
    bool capped = fit.hit_cap();
    FitResult reported = fit;
    if (reestimate) {
      reported = reestimate_active(prob.family.loss, prob.X, prob.data.y, fit.active_set, prob.family.groups,
                                   prob.family.config, fit.theta);
      converged = converged && reported.converged;
      capped = capped || reported.hit_cap();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& w : fit.warnings) err << "warning: " << w << '\n';

    json summary;
    summary["command"] = "fit";
    summary["loss"] = to_string(prob.family.loss);
    summary["strategy"] = prob.family.is_group() ? "cyclic" : to_string(prob.family.config.strategy);
    if (const auto* g = penalty.as_group()) {
      summary["lambda1"] = g->lambda1;
      summary["lambda2"] = g->lambda2;
    } else {
      summary["lambda"] = penalty.as_lasso()->lambda;
    }
    summary["objective"] = fit.objective;
    summary["sweeps"] = fit.sweeps;
    summary["updates"] = fit.updates;
    summary["visits"] = fit.visits;
    summary["converged"] = converged;
    summary["n_nonzero"] = fit.active_set.size();
    summary["reestimated"] = reestimate;
    summary["wall_seconds"] = seconds;

    OutputStage stage;
    write_coefficients(stage.open(o.out), prob.to_output(reported.theta), predictor_names(prob));
    write_summary(stage, o.out, summary);
    stage.commit();
    out << summary.dump() << '\n';
    return capped ? 2 : 0;
  }
};

// ---------------------------------------------------------------------------
// cv

SearchSpec parse_search(const std::string& text, double tol) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
  std::vector<double> values;
  std::stringstream ss(args);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad number in --search: '" + item + "'");
    }
  }
  if (kind == "grid") {
    if (values.empty()) throw UsageError("--search grid:SPEC needs at least one lambda");
    return GridSpec{values};
  }
  if (kind == "bracket") {
    if (values.size() > 2) throw UsageError("--search bracket takes at most r,lambda0");
    BracketGoldenSpec spec;
    spec.tol_rel = tol;
    if (!values.empty()) spec.r = values[0];
    if (values.size() == 2) spec.lambda0 = values[1];
    if (!(spec.r > 0.0 && spec.r < 1.0)) throw UsageError("bracket r must lie in (0, 1)");
    if (spec.lambda0 && !(*spec.lambda0 > 0.0)) throw UsageError("bracket lambda0 must be > 0");
    return spec;
  }
  throw UsageError("--search must be grid:L1,L2,... or bracket[:r[,lambda0]]");
}

std::vector<GroupSlice> parse_slices(const std::string& text) {
  if (text == "all") return {GroupSlice::Lambda1Zero, GroupSlice::Lambda2Zero, GroupSlice::Equal};
  if (text == "lambda1=0") return {GroupSlice::Lambda1Zero};
  if (text == "lambda2=0") return {GroupSlice::Lambda2Zero};
  return {GroupSlice::Equal};
}

json bracket_json(const Bracket& b) { return json::array({b.high, b.mid, b.low}); }

struct CvCommand {
  FitOptions o;
  int folds = 10;
  std::string search = "bracket";
  double tol = 1e-2;
  std::string slice = "all";
  bool no_reestimate = false;

  void attach(CLI::App& cmd) {
    add_fit_options(cmd, o);
    cmd.add_option("--folds", folds, "Number of cross-validation folds");
    cmd.add_option("--search", search, "grid:L1,L2,... or bracket[:r[,lambda0]]");
    cmd.add_option("--tol", tol, "Relative golden-section tolerance");
    cmd.add_option("--tol-obj", o.tol_obj, "Relative objective-change tolerance for each fit");
    cmd.add_option("--slice", slice, "Group slices to search")
        ->check(CLI::IsMember({"all", "lambda1=0", "lambda2=0", "equal"}));
    cmd.add_flag("--no-reestimate", no_reestimate, "Score folds with the penalized fit");
  }

  int run(std::ostream& out, std::ostream& err) {
    Problem prob = load_problem(o);
    prob.family.reestimate = !no_reestimate;
    const SearchSpec spec = parse_search(search, tol);
    const std::uint64_t seed = resolve_seed(o, out);
    const FoldAssignment fold_split = kfold_split(prob.X.rows(), folds, seed);
    std::vector<GroupSlice> slices;
    if (prob.family.is_group()) slices = parse_slices(slice);

    const TuningResult tuned = tune(prob.family, prob.X, prob.data.y, spec, fold_split, slices);
    for (const auto& w : tuned.penalized.warnings) err << "warning: " << w << '\n';
    bool converged = tuned.penalized.converged && tuned.refit.converged;
    const bool capped = tuned.penalized.hit_cap() || tuned.refit.hit_cap();
    bool flagged = false;
    for (const auto& pt : tuned.curve) flagged = flagged || pt.flagged;

    json summary;
    summary["command"] = "cv";
    summary["loss"] = to_string(prob.family.loss);
    summary["strategy"] = prob.family.is_group() ? "cyclic" : to_string(prob.family.config.strategy);
    summary["folds"] = folds;
    summary["seed"] = seed;
    summary["lambda_star"] = tuned.best_lambda;
    if (prob.family.is_group()) {
      summary["slice"] = to_string(tuned.slice);
      summary["lambda1"] = tuned.best_lambda1;
      summary["lambda2"] = tuned.best_lambda2;
    }
    summary["cv_error"] = tuned.best_cv_error;
    summary["bracket"] = bracket_json(tuned.bracket);
    summary["bracket_found"] = tuned.bracket.found;
    summary["n_nonzero"] = tuned.refit.active_set.size();
    summary["converged"] = converged;
    summary["curve_flagged"] = flagged;
    summary["reestimated"] = prob.family.reestimate;

    OutputStage stage;
    write_coefficients(stage.open(o.out), prob.to_output(tuned.refit.theta), predictor_names(prob));
    write_curve_tsv(stage.open(o.out + ".curve.tsv"), tuned.curve, prob.family.is_group());
    write_summary(stage, o.out, summary);
    stage.commit();

    out << "lambda_star\t" << format_number(tuned.best_lambda) << '\n';
    if (prob.family.is_group()) {
      out << "lambda1\t" << format_number(tuned.best_lambda1) << '\n';
      out << "lambda2\t" << format_number(tuned.best_lambda2) << '\n';
    }
    out << "cv_error\t" << format_number(tuned.best_cv_error) << '\n';
    return capped ? 2 : 0;
  }
};

// ---------------------------------------------------------------------------
// path

struct PathCommand {
  FitOptions o;
  std::string grid;
  std::optional<int> folds;
  std::string slice = "equal";
  bool no_reestimate = false;

  void attach(CLI::App& cmd) {
    add_fit_options(cmd, o);
    cmd.add_option("--lambda-grid", grid, "Geometric grid lambda0,r,count (lambda0 may be 'auto')")->required();
    cmd.add_option("--folds", folds, "Also report k-fold cross-validation error");
    cmd.add_option("--tol", o.tol_obj, "Relative objective-change tolerance");
    cmd.add_option("--slice", slice, "Group slice traced by the path")
        ->check(CLI::IsMember({"lambda1=0", "lambda2=0", "equal"}));
    cmd.add_flag("--no-reestimate", no_reestimate, "Score folds with the penalized fit");
  }

  std::vector<double> lambdas(const Problem& prob) const {
    std::vector<std::string> parts;
    std::stringstream ss(grid);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(item);
    if (parts.size() != 3) throw UsageError("--lambda-grid must be lambda0,r,count");
    double lambda0 = 0.0, r = 0.0;
    long count = 0;
    try {
      lambda0 = parts[0] == "auto" ? default_lambda0(prob.family.is_group() ? Loss::L2 : prob.family.loss, prob.X,
                                                     prob.data.y)
                                   : std::stod(parts[0]);
      r = std::stod(parts[1]);
      count = std::stol(parts[2]);
    } catch (const std::invalid_argument&) {
      throw UsageError("--lambda-grid must be lambda0,r,count");
    }
    if (!(lambda0 > 0.0) || !(r > 0.0 && r < 1.0) || count < 1) {
      throw UsageError("--lambda-grid needs lambda0 > 0, 0 < r < 1 and count >= 1");
    }
    std::vector<double> out;
    for (long i = 0; i < count; ++i) out.push_back(lambda0 * std::pow(r, static_cast<double>(i)));
    return out;
  }

  int run(std::ostream& out, std::ostream& err) {
    Problem prob = load_problem(o);
    prob.family.reestimate = !no_reestimate;
    const GroupSlice gs = prob.family.is_group() ? parse_slices(slice).front() : GroupSlice::None;
    const std::vector<double> grid_values = lambdas(prob);
    std::optional<CvEvaluator> cv;
    std::uint64_t seed = 0;
    if (folds) {
      seed = resolve_seed(o, out);
      cv.emplace(prob.family, prob.X, prob.data.y, kfold_split(prob.X.rows(), *folds, seed), gs);
    }

    std::ostringstream tsv;
    tsv << (prob.family.is_group() ? "lambda1\tlambda2" : "lambda") << "\tobjective\tn_nonzero\ttraining_error";
    if (cv) tsv << "\tcv_error";
    tsv << "\tconverged\n";
    std::optional<ParameterVector> warm = load_warm_start(o, prob);
    bool all_converged = true;
    bool capped = false;
    for (double t : grid_values) {
      const PenaltySpec penalty = prob.family.penalty_at(t, gs);
      FitResult fit = fit_family(prob.family, prob.X, prob.data.y, penalty, warm);
      for (const auto& w : fit.warnings) err << "warning: " << w << '\n';
      all_converged = all_converged && fit.converged;
      capped = capped || fit.hit_cap();
      if (const auto* g = penalty.as_group()) tsv << format_number(g->lambda1) << '\t' << format_number(g->lambda2);
      else tsv << format_number(t);
      tsv << '\t' << format_number(fit.objective) << '\t' << fit.active_set.size() << '\t'
          << format_number(prediction_error(prob.family.loss, prob.X, prob.data.y, fit.theta));
      if (cv) {
        const CvCurvePoint& pt = cv->evaluate(t);
        all_converged = all_converged && !pt.flagged;
        tsv << '\t' << format_number(pt.cv_error);
      }
      tsv << '\t' << (fit.converged ? 1 : 0) << '\n';
      warm = std::move(fit.theta);
    }

    json summary;
    summary["command"] = "path";
    summary["loss"] = to_string(prob.family.loss);
    summary["strategy"] = prob.family.is_group() ? "cyclic" : to_string(prob.family.config.strategy);
    summary["points"] = grid_values.size();
    summary["lambda_max"] = grid_values.front();
    summary["lambda_min"] = grid_values.back();
    if (cv) {
      summary["folds"] = *folds;
      summary["seed"] = seed;
    }
    summary["converged"] = all_converged;

    OutputStage stage;
    stage.open(o.out) << tsv.str();
    write_summary(stage, o.out, summary);
    stage.commit();
    return capped ? 2 : 0;
  }
};

// ---------------------------------------------------------------------------
// simulate

struct SimulateCommand {
  FitOptions o;
  std::optional<std::string> config_file;
  std::vector<std::pair<std::string, std::optional<std::string>>> overrides = {
      {"p", {}}, {"n", {}}, {"n_test", {}}, {"rho", {}}, {"noise", {}}, {"mu_true", {}},
      {"beta_true", {}}, {"correlated", {}}};
  bool noise_free = false;
  int replicates = 1;
  int folds = 10;
  std::string search = "bracket";
  double tol = 1e-2;
  bool test_optimal = false;
  bool timing = false;
  bool no_reestimate = false;

  void attach(CLI::App& cmd) {
    add_fit_options(cmd, o, false);
    cmd.add_option("--config", config_file, "key=value simulation config file");
    for (auto& [key, value] : overrides) {
      std::string flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      cmd.add_option(flag, value, "Simulation setting " + key);
    }
    cmd.add_flag("--noise-free", noise_free, "Generate responses without noise");
    cmd.add_option("--replicates", replicates, "Number of replicates");
    cmd.add_option("--folds", folds, "Cross-validation folds per replicate");
    cmd.add_option("--search", search, "grid:L1,L2,... or bracket[:r[,lambda0]]");
    cmd.add_option("--tol", tol, "Relative golden-section tolerance");
    cmd.add_option("--tol-obj", o.tol_obj, "Relative objective-change tolerance for each fit");
    cmd.add_flag("--test-optimal", test_optimal, "Also locate the test-error-optimal lambda");
    cmd.add_flag("--timing", timing, "Record the wall time of the final fit");
    cmd.add_flag("--no-reestimate", no_reestimate, "Skip unpenalized re-estimation");
  }

  int run(std::ostream& out, std::ostream& err) {
    SimConfig config;
    if (config_file) {
      std::ifstream in(*config_file);
      if (!in) throw UsageError("cannot open " + *config_file);
      config = parse_sim_config(in);
    }
    for (const auto& [key, value] : overrides) {
      if (value) set_sim_option(config, key, *value);
    }
    if (noise_free) config.noise_free = true;
    if (replicates < 1) throw UsageError("--replicates must be >= 1");
    config.seed = resolve_seed(o, out);
    config.validate();

    SolverFamily family;
    family.loss = loss_of(o);
    family.config.max_sweeps = o.max_sweeps;
    family.config.tol_obj = o.tol_obj;
    family.config.strategy = strategy_of(o);
    family.config.validate();
    family.reestimate = !no_reestimate;
    const SearchSpec spec = parse_search(search, tol);
    StudyOptions options;
    options.folds = folds;
    options.test_optimal_lambda = test_optimal;
    options.timing = timing;
    if (folds < 2 || folds > config.n) throw UsageError("--folds must satisfy 2 <= k <= n");

    const StudyResult study = replicate_study(config, family, spec, replicates, options);
    int failed = 0;
    bool capped = false;
    for (const auto& row : study.rows) {
      if (row.failed()) {
        ++failed;
        err << "replicate " << row.replicate << ": " << row.status << '\n';
      }
      capped = capped || row.status == "cap";
    }
    if (failed > 0) throw UsageError(std::to_string(failed) + " replicate(s) failed");

    OutputStage stage;
    write_study_tsv(stage.open(o.out), study.rows, options);
    write_summary_tsv(stage.open(o.out + ".summary.tsv"), study.summary, options);
    stage.commit();
    write_summary_tsv(out, study.summary, options);
    return capped ? 2 : 0;
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coordinate descent for lasso-penalized l1 and l2 regression"};
  app.require_subcommand(1);
  FitCommand fit;
  CvCommand cv;
  PathCommand path;
  SimulateCommand simulate;
  auto* fit_cmd = app.add_subcommand("fit", "Fit at a fixed penalty");
  auto* cv_cmd = app.add_subcommand("cv", "Choose the penalty by cross-validation");
  auto* path_cmd = app.add_subcommand("path", "Trace fits along a decreasing penalty grid");
  auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation study");
  fit.attach(*fit_cmd);
  cv.attach(*cv_cmd);
  path.attach(*path_cmd);
  simulate.attach(*sim_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*fit_cmd) return fit.run(out, err);
    if (*cv_cmd) return cv.run(out, err);
    if (*path_cmd) return path.run(out, err);
    return simulate.run(out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace lassocd::cli
