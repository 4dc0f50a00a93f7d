#pragma once

// Data files for the command-line tool.
//
// Vectors: one number per line under the header `value`.
// Matrices: headerless comma-separated rows.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cvalue/errors.hpp"
#include "cvalue/linalg.hpp"
#include "cvalue/simulation.hpp"

namespace cvalue {

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open file: " + path);
  return in;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_cell(const std::string& cell, const std::string& path, std::size_t row) {
  try {
    return parse_double(trim(cell), row);
  } catch (const DomainError&) {
    throw DomainError(path + ": row " + std::to_string(row) + ": cannot parse number '" + trim(cell) + "'");
  }
}

}  // namespace detail

inline Vec read_vector_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "value") {
    throw DomainError(path + ": row 1: expected header 'value'");
  }
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    if (line.find(',') != std::string::npos) {
      throw DomainError(path + ": row " + std::to_string(row) + ": expected a single column");
    }
    values.push_back(detail::parse_cell(line, path, row));
  }
  if (values.empty()) throw DomainError(path + ": no values");
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline Mat read_matrix_csv(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    std::vector<double> cells;
    for (const auto& cell : detail::split_csv(line)) cells.push_back(detail::parse_cell(cell, path, row));
    if (!rows.empty() && cells.size() != rows.front().size()) {
      throw DomainError(path + ": row " + std::to_string(row) + ": expected " + std::to_string(rows.front().size()) +
                        " columns, found " + std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw DomainError(path + ": no rows");
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

inline void write_vector_csv(const std::string& path, const Vec& v) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write file: " + path);
  out << "value\n";
  for (Eigen::Index i = 0; i < v.size(); ++i) out << detail::fmt17(v(i)) << '\n';
}

inline void write_matrix_csv(const std::string& path, const Mat& m) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write file: " + path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << detail::fmt17(m(i, j));
    out << '\n';
  }
}

}  // namespace cvalue
