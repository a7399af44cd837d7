#pragma once

#include "lassocd/core.hpp"

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lassocd::cli {

struct Dataset {
  std::vector<std::string> header;
  std::string response_column;
  DesignMatrix predictors;
  Vector y;
};

/// Reads a comma-separated file with a header row. The response is the named
/// column, or a 1-based column number; by default the column called "y", else
/// the first column. Throws std::runtime_error naming the offending line.
Dataset read_dataset(const std::filesystem::path& path, const std::optional<std::string>& response = std::nullopt);
Dataset parse_dataset(std::istream& in, const std::optional<std::string>& response = std::nullopt);

/// Two-column CSV (predictor,group) with a header row. Group labels are mapped
/// to indices in order of first appearance; every predictor must appear once.
GroupStructure read_groups(const std::filesystem::path& path, const std::vector<std::string>& predictor_names);

/// Coefficient table: name,coefficient,active with the intercept first.
void write_coefficients(std::ostream& out, const ParameterVector& theta, const std::vector<std::string>& names);
ParameterVector read_coefficients(const std::filesystem::path& path, const std::vector<std::string>& names);

/// 17 significant digits; enough to round-trip a double.
std::string format_number(double v);

/// Collects output files under temporary names and renames them into place on
/// commit(). Uncommitted files are removed on destruction.
class OutputStage {
 public:
  OutputStage() = default;
  OutputStage(const OutputStage&) = delete;
  OutputStage& operator=(const OutputStage&) = delete;
  ~OutputStage();

  /// Opens a temporary file that will become `target`.
  std::ofstream& open(const std::filesystem::path& target);
  void commit();

 private:
  struct Entry {
    std::filesystem::path target;
    std::filesystem::path temp;
    std::unique_ptr<std::ofstream> stream;
  };
  std::vector<Entry> entries_;
  bool committed_ = false;
};

/// Entry point for the command-line tool. Returns 0 on success, 1 on a usage
/// or data error and 2 when a fit stopped at the iteration cap.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lassocd::cli
