#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "algcp/common.hpp"

namespace algcp {

/// Regular lat-lon lattice. Storage is row-major with the origin at the
/// lower-left corner: index 0 is the south-west cell, rows run south to
/// north. All file I/O converts explicitly to/from this layout.
struct GridSpec {
  int ncols = 0;
  int nrows = 0;
  double x_origin = 0.0;  // degrees, lower-left corner
  double y_origin = 0.0;  // degrees, lower-left corner
  double cell_size = 0.0; // degrees per (square) cell

  bool operator==(const GridSpec&) const = default;

  std::size_t size() const { return static_cast<std::size_t>(ncols) * nrows; }

  void validate() const {
    require(ncols >= 1 && nrows >= 1, "bad_grid", "grid dimensions must be >= 1");
    require(cell_size > 0.0 && std::isfinite(cell_size), "bad_grid",
            "cell size must be positive and finite");
  }

  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * ncols + col;
  }
  int col_of_index(std::size_t i) const { return static_cast<int>(i % ncols); }
  int row_of_index(std::size_t i) const { return static_cast<int>(i / ncols); }

  double cell_center_x(int col) const { return x_origin + (col + 0.5) * cell_size; }
  double cell_center_y(int row) const { return y_origin + (row + 0.5) * cell_size; }

  int col_of_x(double x) const { return static_cast<int>(std::floor((x - x_origin) / cell_size)); }
  int row_of_y(double y) const { return static_cast<int>(std::floor((y - y_origin) / cell_size)); }

  bool contains(int col, int row) const {
    return col >= 0 && col < ncols && row >= 0 && row < nrows;
  }

  /// Cell index of a lon/lat point, or error when the point is off-grid.
  std::size_t cell_of_point(double lon, double lat, const std::string& what) const {
    const int c = col_of_x(lon);
    const int r = row_of_y(lat);
    require(contains(c, r), "off_grid", what + " falls outside the grid");
    return index(c, r);
  }

  double central_latitude() const { return y_origin + 0.5 * nrows * cell_size; }
};

inline void require_compatible(const GridSpec& a, const GridSpec& b, const char* what) {
  if (!(a == b)) {
    fail("grid_mismatch", std::string(what) +
                              ": grids differ; arithmetic across grids is never resampled silently");
  }
}

/// Grid-aligned values plus an explicit missing mask. A missing cell is
/// absence of data; it is distinct from any stored value (including zero).
struct Raster {
  GridSpec spec;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;  // 1 = missing

  Raster() = default;
  explicit Raster(const GridSpec& s, double fill = 0.0, bool all_missing = false)
      : spec(s), values(s.size(), fill), missing(s.size(), all_missing ? 1 : 0) {
    spec.validate();
  }

  std::size_t size() const { return values.size(); }

  double at(int col, int row) const { return values[spec.index(col, row)]; }
  double& at(int col, int row) { return values[spec.index(col, row)]; }
  bool is_missing(std::size_t i) const { return missing[i] != 0; }
  bool is_missing(int col, int row) const { return missing[spec.index(col, row)] != 0; }

  void set(int col, int row, double v) {
    const std::size_t i = spec.index(col, row);
    values[i] = v;
    missing[i] = 0;
  }
  void set_missing(int col, int row) { missing[spec.index(col, row)] = 1; }

  std::size_t missing_count() const {
    std::size_t n = 0;
    for (auto m : missing) n += m;
    return n;
  }
  bool complete() const { return missing_count() == 0; }

  /// Sum over non-missing cells (fixed-order pairwise reduction).
  double total() const {
    std::vector<double> vals;
    vals.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      vals.push_back(missing[i] ? 0.0 : values[i]);
    }
    return pairwise_sum(vals);
  }
};

inline Raster map_raster(const Raster& r, const std::function<double(double)>& f) {
  Raster out = r;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!out.missing[i]) out.values[i] = f(out.values[i]);
  }
  return out;
}

/// Cellwise minimum of two rasters on the same grid; missing cells lose.
inline Raster raster_min(const Raster& a, const Raster& b) {
  require_compatible(a.spec, b.spec, "raster_min");
  Raster out(a.spec);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (a.missing[i] && b.missing[i]) {
      out.missing[i] = 1;
    } else if (a.missing[i]) {
      out.values[i] = b.values[i];
    } else if (b.missing[i]) {
      out.values[i] = a.values[i];
    } else {
      out.values[i] = std::min(a.values[i], b.values[i]);
    }
  }
  return out;
}

}  // namespace algcp
