#include "lassocd/cli.hpp"
#include "lassocd/l2_solver.hpp"
#include "lassocd/simgen.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace lassocd;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("lassocd_cli_") + info->name() + "_" +
                                        std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "lassocd");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return cli::run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Writes a simulated data set as CSV with columns y, x1..xp.
  fs::path simulated_csv(const std::string& name, Index p, Index n, std::uint64_t seed) const {
    SimConfig cfg;
    cfg.p = p;
    cfg.n = n;
    cfg.seed = seed;
    const DesignMatrix X = gen_design(cfg);
    const Vector y = gen_response(X, cfg);
    std::ostringstream csv;
    csv << "y";
    for (Index j = 0; j < p; ++j) csv << ",x" << j + 1;
    csv << '\n';
    for (Index i = 0; i < n; ++i) {
      csv << cli::format_number(y[i]);
      for (Index j = 0; j < p; ++j) csv << ',' << cli::format_number(X(i, j));
      csv << '\n';
    }
    return write(name, csv.str());
  }

  std::vector<std::vector<std::string>> table(const fs::path& p, char sep) const {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, sep)) cells.push_back(cell);
      rows.push_back(cells);
    }
    return rows;
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

}  // namespace

TEST(Dataset, ParsesHeaderAndResponse) {
  std::istringstream in("a,y,b\n1,2,3\n4,5,6\n");
  const auto d = cli::parse_dataset(in);
  EXPECT_EQ(d.response_column, "y");
  EXPECT_EQ(d.predictors.cols(), 2);
  EXPECT_EQ(d.predictors.names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_DOUBLE_EQ(d.y[1], 5.0);
  std::istringstream in2("a,b,c\n1,2,3\n4,5,6\n");
  EXPECT_EQ(cli::parse_dataset(in2).response_column, "a");
  std::istringstream in3("a,b,c\n1,2,3\n4,5,6\n");
  EXPECT_DOUBLE_EQ(cli::parse_dataset(in3, "3").y[0], 3.0);
}

TEST(Dataset, RejectsMissingAndMalformedValues) {
  std::istringstream missing("y,x\n1,\n");
  EXPECT_THROW(cli::parse_dataset(missing), std::runtime_error);
  std::istringstream text("y,x\n1,abc\n");
  EXPECT_THROW(cli::parse_dataset(text), std::runtime_error);
  std::istringstream ragged("y,x\n1,2,3\n");
  EXPECT_THROW(cli::parse_dataset(ragged), std::runtime_error);
  std::istringstream only_y("y\n1\n");
  EXPECT_THROW(cli::parse_dataset(only_y), std::runtime_error);
}

TEST(FormatNumber, RoundTrips) {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 123456789.123456789}) EXPECT_EQ(std::stod(cli::format_number(v)), v);
}

TEST_F(CliTest, FitOlsSlope) {
  const auto in = write("d.csv", "y,x\n1,1\n3,2\n2,3\n");
  EXPECT_EQ(run({"fit", "--input", in.string(), "--loss", "l2", "--lambda", "0", "--out", path("c.csv").string()}), 0);
  const auto theta = cli::read_coefficients(path("c.csv"), {"x"});
  // Hand normal equations: xbar = 2, ybar = 2, Sxy = 1, Sxx = 2. The solver
  // stops once |X^t r| <= 1e-6, which bounds the error near 1e-5 here.
  EXPECT_NEAR(theta.beta[0], 0.5, 1e-5);
  EXPECT_NEAR(theta.mu, 1.0, 1e-5);
  const auto summary = nlohmann::json::parse(slurp(path("c.csv.summary")));
  EXPECT_TRUE(summary["converged"].get<bool>());
  EXPECT_TRUE(summary.contains("wall_seconds"));
  EXPECT_TRUE(summary.contains("objective"));
  EXPECT_TRUE(summary.contains("sweeps"));
}

TEST_F(CliTest, FitHugeLambdaGivesLocation) {
  const auto in = write("d.csv", "y,x1,x2\n1,1,0\n3,2,1\n2,3,5\n10,-1,2\n");
  ASSERT_EQ(run({"fit", "--input", in.string(), "--lambda", "1e6", "--out", path("l2.csv").string()}), 0);
  const auto t2 = cli::read_coefficients(path("l2.csv"), {"x1", "x2"});
  EXPECT_TRUE(t2.beta.isZero(0.0));
  EXPECT_NEAR(t2.mu, 4.0, 1e-12);
  ASSERT_EQ(run({"fit", "--input", in.string(), "--loss", "l1", "--lambda", "1e6", "--out", path("l1.csv").string()}),
            0);
  const auto t1 = cli::read_coefficients(path("l1.csv"), {"x1", "x2"});
  EXPECT_TRUE(t1.beta.isZero(0.0));
  EXPECT_DOUBLE_EQ(t1.mu, 2.0);
  const auto rows = table(path("l1.csv"), ',');
  EXPECT_EQ(rows[0], (std::vector<std::string>{"name", "coefficient", "active"}));
  EXPECT_EQ(rows[1][0], "(intercept)");
}

TEST_F(CliTest, L1StallIsNotTheIterationCap) {
  // Cyclic Edgeworth stops short of stationarity on this data.
  const auto in = write("st.csv", "y,x1,x2\n-1,9,7\n0,5,-8\n-6,-4,4\n4,0,-9\n-8,7,-8\n-4,-4,-7\n");
  EXPECT_EQ(run({"fit", "--input", in.string(), "--loss", "l1", "--strategy", "cyclic", "--lambda", "1", "--out",
                 path("c.csv").string()}),
            0);
  const auto summary = nlohmann::json::parse(slurp(path("c.csv.summary")));
  EXPECT_FALSE(summary["converged"].get<bool>());
  EXPECT_NE(err_.str().find("warning: cyclic l1 objective stalled"), std::string::npos);
}

TEST_F(CliTest, MalformedInputWritesNothing) {
  const auto in = write("bad.csv", "y,x\n1,2\n3,oops\n");
  EXPECT_EQ(run({"fit", "--input", in.string(), "--lambda", "1", "--out", path("c.csv").string()}), 1);
  const std::string err = err_.str();
  EXPECT_NE(err.find("error:"), std::string::npos);
  EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1);
  EXPECT_FALSE(fs::exists(path("c.csv")));
  EXPECT_FALSE(fs::exists(path("c.csv.summary")));
  EXPECT_EQ(std::distance(fs::directory_iterator(dir_), fs::directory_iterator()), 1);
}

TEST_F(CliTest, IterationCapExitsTwo) {
  const auto in = simulated_csv("d.csv", 30, 40, 2);
  EXPECT_EQ(run({"fit", "--input", in.string(), "--lambda", "0.01", "--max-sweeps", "1", "--out",
                 path("c.csv").string()}),
            2);
  EXPECT_TRUE(fs::exists(path("c.csv")));
}

TEST_F(CliTest, StandardizedCoefficientsOnOriginalScale) {
  const auto in = write("d.csv", "y,x1,x2\n1,10,0.1\n3,20,0.5\n2,35,0.2\n7,41,0.9\n5,12,0.4\n");
  ASSERT_EQ(run({"fit", "--input", in.string(), "--lambda", "0", "--tol", "1e-14", "--out", path("a.csv").string()}),
            0);
  ASSERT_EQ(run({"fit", "--input", in.string(), "--lambda", "0", "--tol", "1e-14", "--standardize", "--out",
                 path("b.csv").string()}),
            0);
  const auto a = cli::read_coefficients(path("a.csv"), {"x1", "x2"});
  const auto b = cli::read_coefficients(path("b.csv"), {"x1", "x2"});
  EXPECT_NEAR(a.mu, b.mu, 1e-6);
  EXPECT_NEAR(a.beta[0], b.beta[0], 1e-7);
  EXPECT_NEAR(a.beta[1], b.beta[1], 1e-6);
}

TEST_F(CliTest, CoefficientRoundTripWarmStart) {
  const auto in = simulated_csv("d.csv", 20, 50, 3);
  ASSERT_EQ(run({"fit", "--input", in.string(), "--lambda", "5", "--out", path("c.csv").string()}), 0);
  ASSERT_EQ(run({"fit", "--input", in.string(), "--lambda", "5", "--warm-start", path("c.csv").string(), "--out",
                 path("w.csv").string()}),
            0);
  const auto first = nlohmann::json::parse(slurp(path("c.csv.summary")));
  const auto again = nlohmann::json::parse(slurp(path("w.csv.summary")));
  EXPECT_LE(again["sweeps"].get<int>(), 2);
  EXPECT_NEAR(again["objective"].get<double>(), first["objective"].get<double>(),
              1e-9 * first["objective"].get<double>());
}

TEST_F(CliTest, GroupFitFromGroupsFile) {
  const auto in = simulated_csv("d.csv", 6, 40, 4);
  const auto groups = write("g.csv", "predictor,group\nx1,a\nx2,a\nx3,b\nx4,b\nx5,c\nx6,c\n");
  ASSERT_EQ(run({"fit", "--input", in.string(), "--groups", groups.string(), "--lambda1", "0.5", "--lambda2", "200",
                 "--out", path("c.csv").string()}),
            0);
  const auto theta = cli::read_coefficients(path("c.csv"), {"x1", "x2", "x3", "x4", "x5", "x6"});
  EXPECT_EQ(theta.beta[2] == 0.0, theta.beta[3] == 0.0);
  EXPECT_EQ(run({"fit", "--input", in.string(), "--groups", groups.string(), "--lambda", "1", "--out",
                 path("x.csv").string()}),
            1);
}

TEST_F(CliTest, CvRejectsSingleFold) {
  const auto in = simulated_csv("d.csv", 10, 30, 5);
  EXPECT_EQ(run({"cv", "--input", in.string(), "--folds", "1", "--seed", "1", "--out", path("c.csv").string()}), 1);
  EXPECT_FALSE(fs::exists(path("c.csv")));
}

TEST_F(CliTest, CvIsByteIdenticalForSameSeed) {
  const auto in = simulated_csv("d.csv", 30, 60, 6);
  const std::vector<std::string> common{"cv", "--input", in.string(), "--folds", "5", "--seed", "11"};
  auto a = common;
  a.insert(a.end(), {"--out", path("a.csv").string()});
  auto b = common;
  b.insert(b.end(), {"--out", path("b.csv").string()});
  ASSERT_EQ(run(a), 0);
  const std::string out_a = out_.str();
  ASSERT_EQ(run(b), 0);
  EXPECT_EQ(out_.str(), out_a);
  EXPECT_NE(out_a.find("lambda_star\t"), std::string::npos);
  EXPECT_NE(out_a.find("cv_error\t"), std::string::npos);
  for (const char* suffix : {"", ".curve.tsv", ".summary"}) {
    EXPECT_EQ(slurp(path(std::string("a.csv") + suffix)), slurp(path(std::string("b.csv") + suffix))) << suffix;
  }
}

TEST_F(CliTest, CvBracketAgreesWithGrid) {
  const auto in = simulated_csv("d.csv", 40, 80, 7);
  const double tol = 1e-3;
  ASSERT_EQ(run({"cv", "--input", in.string(), "--folds", "5", "--seed", "3", "--no-reestimate", "--tol", "1e-3",
                 "--tol-obj", "1e-12", "--out", path("b.csv").string()}),
            0);
  const auto summary = nlohmann::json::parse(slurp(path("b.csv.summary")));
  const double lambda_b = summary["lambda_star"].get<double>();
  const double high = summary["bracket"][0].get<double>();
  const double low = summary["bracket"][2].get<double>();
  // Fine grid across the bracket.
  std::string grid = "grid:";
  const int points = 400;
  for (int i = 0; i <= points; ++i) {
    grid += cli::format_number(low + (high - low) * i / points);
    if (i < points) grid += ",";
  }
  ASSERT_EQ(run({"cv", "--input", in.string(), "--folds", "5", "--seed", "3", "--no-reestimate", "--tol-obj", "1e-12",
                 "--search", grid, "--out", path("g.csv").string()}),
            0);
  const double lambda_g = nlohmann::json::parse(slurp(path("g.csv.summary")))["lambda_star"].get<double>();
  EXPECT_NEAR(lambda_b, lambda_g, tol * high + (high - low) / points);
}

TEST_F(CliTest, PathStartsEmptyAndMatchesColdFits) {
  const auto in = simulated_csv("d.csv", 50, 60, 8);
  ASSERT_EQ(run({"path", "--input", in.string(), "--lambda-grid", "auto,0.8,25", "--tol", "1e-12", "--out",
                 path("p.tsv").string()}),
            0);
  const auto rows = table(path("p.tsv"), '\t');
  ASSERT_EQ(rows.size(), 26u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"lambda", "objective", "n_nonzero", "training_error", "converged"}));
  EXPECT_EQ(rows[1][2], "0");
  int nondecreasing = 0;
  for (std::size_t i = 2; i < rows.size(); ++i) nondecreasing += std::stoi(rows[i][2]) >= std::stoi(rows[i - 1][2]);
  EXPECT_GE(nondecreasing, static_cast<int>(0.9 * (rows.size() - 2)));
  for (std::size_t i = 1; i < rows.size(); i += 6) {
    ASSERT_EQ(run({"fit", "--input", in.string(), "--lambda", rows[i][0], "--tol", "1e-12", "--out",
                   path("cold.csv").string()}),
              0);
    const double cold = nlohmann::json::parse(slurp(path("cold.csv.summary")))["objective"].get<double>();
    EXPECT_NEAR(std::stod(rows[i][1]), cold, 1e-7 * cold) << rows[i][0];
  }
}

TEST_F(CliTest, PathWithFoldsAddsCvColumn) {
  const auto in = simulated_csv("d.csv", 20, 40, 9);
  ASSERT_EQ(run({"path", "--input", in.string(), "--lambda-grid", "auto,0.5,5", "--folds", "4", "--seed", "2", "--out",
                 path("p.tsv").string()}),
            0);
  const auto rows = table(path("p.tsv"), '\t');
  EXPECT_EQ(rows[0][4], "cv_error");
}

TEST_F(CliTest, SimulateDeterministicAndValidated) {
  const std::vector<std::string> base{"simulate", "--p", "30", "--n", "40", "--n-test", "200", "--replicates", "1",
                                      "--folds", "4", "--seed", "7"};
  auto a = base;
  a.insert(a.end(), {"--out", path("a.tsv").string()});
  auto b = base;
  b.insert(b.end(), {"--out", path("b.tsv").string()});
  ASSERT_EQ(run(a), 0);
  ASSERT_EQ(run(b), 0);
  EXPECT_EQ(slurp(path("a.tsv")), slurp(path("b.tsv")));
  EXPECT_EQ(slurp(path("a.tsv.summary.tsv")), slurp(path("b.tsv.summary.tsv")));
  auto bad = base;
  bad.insert(bad.end(), {"--rho", "1.2", "--out", path("c.tsv").string()});
  EXPECT_EQ(run(bad), 1);
  EXPECT_FALSE(fs::exists(path("c.tsv")));
}

TEST_F(CliTest, SimulateConfigFile) {
  const auto cfg = write("s.cfg", "p=25\nn=40\nn_test=100\nnoise=laplace\n");
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--loss", "l1", "--replicates", "1", "--folds", "3", "--seed",
                 "1", "--out", path("s.tsv").string()}),
            0);
  EXPECT_TRUE(fs::exists(path("s.tsv.summary.tsv")));
}

TEST_F(CliTest, MissingSeedIsGeneratedAndPrinted) {
  const auto in = simulated_csv("d.csv", 10, 30, 10);
  ASSERT_EQ(run({"cv", "--input", in.string(), "--folds", "3", "--out", path("c.csv").string()}), 0);
  EXPECT_EQ(out_.str().rfind("seed\t", 0), 0u);
}

TEST_F(CliTest, UnknownCommandIsUsageError) {
  EXPECT_EQ(run({"frobnicate"}), 1);
  EXPECT_EQ(run({}), 1);
  EXPECT_EQ(run({"fit", "--help"}), 0);
}

TEST_F(CliTest, OutputStageRemovesUncommittedFiles) {
  {
    cli::OutputStage stage;
    stage.open(path("x.txt")) << "partial";
  }
  EXPECT_FALSE(fs::exists(path("x.txt")));
  EXPECT_EQ(std::distance(fs::directory_iterator(dir_), fs::directory_iterator()), 0);
  {
    cli::OutputStage stage;
    stage.open(path("y.txt")) << "done";
    stage.commit();
  }
  EXPECT_EQ(slurp(path("y.txt")), "done");
}

TEST(Binary, RunsAsProcess) {
  const std::string cmd = std::string(LASSOCD_BINARY) + " --help > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
}
