#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "algcp/common.hpp"

namespace algcp {

/**
 * Sparse cells x facilities matrix of conditional attendance probabilities:
 * entry (i, j) is the probability that a treatment-seeking individual in
 * cell i attends facility j. Rows of populated cells sum to 1, rows of
 * unpopulated cells are empty (sum 0). The nonzero support of column j is
 * facility j's catchment area.
 */
struct WeightMatrix {
  int n_cells = 0;
  int n_facilities = 0;
  std::vector<std::vector<std::pair<std::int32_t, double>>> rows;

  WeightMatrix() = default;
  WeightMatrix(int cells, int facilities)
      : n_cells(cells), n_facilities(facilities), rows(static_cast<std::size_t>(cells)) {}

  double row_sum(std::size_t i) const {
    double s = 0.0;
    for (const auto& [j, w] : rows[i]) s += w;
    return s;
  }

  /// Every weight in [0,1] and every row sum in {0, 1} to within tol.
  void validate(double tol = 1e-12) const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (const auto& [j, w] : rows[i]) {
        require(j >= 0 && j < n_facilities, "corrupt_weights", "facility index out of range");
        require(w >= -tol && w <= 1.0 + tol, "corrupt_weights", "weight outside [0,1]");
      }
      const double s = row_sum(i);
      require(std::fabs(s) <= tol || std::fabs(s - 1.0) <= tol, "corrupt_weights",
              "row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }

  /// Column view: per facility, the (cell, weight) pairs in cell order.
  std::vector<std::vector<std::pair<std::int32_t, double>>> columns() const {
    std::vector<std::vector<std::pair<std::int32_t, double>>> cols(
        static_cast<std::size_t>(n_facilities));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (const auto& [j, w] : rows[i]) {
        cols[static_cast<std::size_t>(j)].push_back({static_cast<std::int32_t>(i), w});
      }
    }
    return cols;
  }

  std::size_t nonzeros() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.size();
    return n;
  }
};

/// Coordinate-format CSV: cell,facility,weight (header line included).
inline void save_weights_csv(const std::string& path, const WeightMatrix& w) {
  std::ostringstream out;
  out << "cell,facility,weight\n";
  char buf[32];
  for (std::size_t i = 0; i < w.rows.size(); ++i) {
    for (const auto& [j, wt] : w.rows[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", wt);
      out << i << ',' << j << ',' << buf << '\n';
    }
  }
  write_file_text(path, out.str());
}

inline WeightMatrix load_weights_csv(const std::string& path, int n_cells, int n_facilities) {
  std::istringstream in(read_file_text(path));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "parse_error", path + " is empty");
  WeightMatrix w(n_cells, n_facilities);
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    require(f.size() == 3, "parse_error", path + ": expected cell,facility,weight");
    const long cell = std::stol(f[0]);
    const long fac = std::stol(f[1]);
    require(cell >= 0 && cell < n_cells && fac >= 0 && fac < n_facilities, "parse_error",
            path + ": index out of range");
    w.rows[static_cast<std::size_t>(cell)].push_back(
        {static_cast<std::int32_t>(fac), std::stod(f[2])});
  }
  return w;
}

}  // namespace algcp
