#include "lassocd/cli.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace lassocd::cli {

namespace {

std::string strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(strip(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                                          : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

double parse_number(const std::string& field, int lineno, std::size_t column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last) {
    throw std::runtime_error("line " + std::to_string(lineno) + ", column " + std::to_string(column + 1) +
                             ": not a number: '" + field + "'");
  }
  if (!std::isfinite(v)) {
    throw std::runtime_error("line " + std::to_string(lineno) + ", column " + std::to_string(column + 1) +
                             ": non-finite value");
  }
  return v;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace

Dataset parse_dataset(std::istream& in, const std::optional<std::string>& response) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!blank(line)) break;
  }
  if (lineno == 0 || blank(line)) throw std::runtime_error("empty input");
  const std::vector<std::string> header = split_fields(line);
  if (header.size() < 2) throw std::runtime_error("need a response and at least one predictor column");

  std::size_t ycol = 0;
  if (response) {
    std::size_t found = header.size();
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == *response) found = j;
    }
    if (found == header.size()) {
      int number = 0;
      const auto [ptr, ec] = std::from_chars(response->data(), response->data() + response->size(), number);
      if (ec == std::errc() && ptr == response->data() + response->size() && number >= 1 &&
          static_cast<std::size_t>(number) <= header.size()) {
        found = static_cast<std::size_t>(number - 1);
      } else {
        throw std::runtime_error("no response column '" + *response + "'");
      }
    }
    ycol = found;
  } else {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == "y") {
        ycol = j;
        break;
      }
    }
  }

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                               " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) row[j] = parse_number(fields[j], lineno, j);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("no data rows");

  const Index n = static_cast<Index>(rows.size());
  const Index p = static_cast<Index>(header.size()) - 1;
  Matrix X(n, p);
  Vector y(n);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != ycol) names.push_back(header[j]);
  }
  for (Index i = 0; i < n; ++i) {
    Index c = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == ycol) y[i] = rows[static_cast<std::size_t>(i)][j];
      else X(i, c++) = rows[static_cast<std::size_t>(i)][j];
    }
  }
  return Dataset{header, header[ycol], DesignMatrix(std::move(X), std::move(names)), std::move(y)};
}

Dataset read_dataset(const std::filesystem::path& path, const std::optional<std::string>& response) {
  auto in = open_input(path);
  try {
    return parse_dataset(in, response);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

GroupStructure read_groups(const std::filesystem::path& path, const std::vector<std::string>& predictor_names) {
  auto in = open_input(path);
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < predictor_names.size(); ++k) index.emplace(predictor_names[k], k);

  std::vector<int> assignment(predictor_names.size(), -1);
  std::map<std::string, int> labels;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 2) {
      throw std::runtime_error(path.string() + " line " + std::to_string(lineno) + ": expected predictor,group");
    }
    const auto it = index.find(fields[0]);
    if (it == index.end()) {
      throw std::runtime_error(path.string() + " line " + std::to_string(lineno) + ": unknown predictor '" +
                               fields[0] + "'");
    }
    if (assignment[it->second] != -1) {
      throw std::runtime_error(path.string() + ": predictor '" + fields[0] + "' listed twice");
    }
    const auto label = labels.emplace(fields[1], static_cast<int>(labels.size())).first;
    assignment[it->second] = label->second;
  }
  for (std::size_t k = 0; k < assignment.size(); ++k) {
    if (assignment[k] == -1) throw std::runtime_error(path.string() + ": predictor '" + predictor_names[k] + "' has no group");
  }
  return GroupStructure(std::move(assignment), static_cast<int>(labels.size()));
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_coefficients(std::ostream& out, const ParameterVector& theta, const std::vector<std::string>& names) {
  out << "name,coefficient,active\n";
  out << "(intercept)," << format_number(theta.mu) << ",1\n";
  for (Index k = 0; k < theta.beta.size(); ++k) {
    out << names[static_cast<std::size_t>(k)] << ',' << format_number(theta.beta[k]) << ','
        << (theta.beta[k] != 0.0 ? 1 : 0) << '\n';
  }
}

ParameterVector read_coefficients(const std::filesystem::path& path, const std::vector<std::string>& names) {
  auto in = open_input(path);
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < names.size(); ++k) index.emplace(names[k], k);
  ParameterVector theta = ParameterVector::zeros(static_cast<Index>(names.size()));
  std::vector<bool> seen(names.size(), false);
  bool intercept = false;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() < 2) throw std::runtime_error(path.string() + " line " + std::to_string(lineno) + ": too few fields");
    const double v = parse_number(fields[1], lineno, 1);
    if (fields[0] == "(intercept)") {
      theta.mu = v;
      intercept = true;
      continue;
    }
    const auto it = index.find(fields[0]);
    if (it == index.end()) {
      throw std::runtime_error(path.string() + " line " + std::to_string(lineno) + ": unknown predictor '" +
                               fields[0] + "'");
    }
    theta.beta[static_cast<Index>(it->second)] = v;
    seen[it->second] = true;
  }
  if (!intercept) throw std::runtime_error(path.string() + ": missing (intercept) row");
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (!seen[k]) throw std::runtime_error(path.string() + ": no coefficient for '" + names[k] + "'");
  }
  return theta;
}

// ---------------------------------------------------------------------------
// OutputStage

OutputStage::~OutputStage() {
  if (committed_) return;
  for (auto& e : entries_) {
    e.stream.reset();
    std::error_code ec;
    std::filesystem::remove(e.temp, ec);
  }
}

std::ofstream& OutputStage::open(const std::filesystem::path& target) {
  Entry e;
  e.target = target;
  e.temp = target;
  e.temp += ".tmp." + std::to_string(::getpid());
  e.stream = std::make_unique<std::ofstream>(e.temp, std::ios::binary | std::ios::trunc);
  if (!*e.stream) throw std::runtime_error("cannot write " + target.string());
  entries_.push_back(std::move(e));
  return *entries_.back().stream;
}

void OutputStage::commit() {
  for (auto& e : entries_) {
    e.stream->flush();
    if (!*e.stream) throw std::runtime_error("write failed for " + e.target.string());
    e.stream->close();
  }
  for (auto& e : entries_) std::filesystem::rename(e.temp, e.target);
  committed_ = true;
}

}  // namespace lassocd::cli
