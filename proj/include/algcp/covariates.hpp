#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "algcp/ascii_grid.hpp"
#include "algcp/grid.hpp"

namespace algcp {

/**
 * Piecewise-linear suitability transform for daytime temperature (deg C):
 * zero at or below 17, ramping to 1 at 25, flat to 30, back to zero at 35
 * and beyond. Continuous everywhere, range exactly [0, 1].
 */
inline double temperature_transform(double temp_c) {
  require(std::isfinite(temp_c), "bad_value", "temperature must be finite");
  if (temp_c <= 17.0) return 0.0;
  if (temp_c < 25.0) return (temp_c - 17.0) / 8.0;
  if (temp_c <= 30.0) return 1.0;
  if (temp_c < 35.0) return (35.0 - temp_c) / 5.0;
  return 0.0;
}

enum class AggregateMode { sum, mean };

/**
 * Re-grids a fine raster onto a coarser (or equal) target lattice by
 * assigning each source cell to the target cell containing its center.
 * `sum` conserves mass (population counts); `mean` averages intensive
 * quantities. Target cells receiving no source cells come back missing.
 */
inline Raster aggregate_to_grid(const Raster& src, const GridSpec& target,
                                AggregateMode mode) {
  target.validate();
  require(src.spec.cell_size <= target.cell_size * (1.0 + 1e-12), "bad_grid",
          "source resolution must be finer than or equal to the target");
  const double sx0 = src.spec.x_origin, sy0 = src.spec.y_origin;
  const double sx1 = sx0 + src.spec.ncols * src.spec.cell_size;
  const double sy1 = sy0 + src.spec.nrows * src.spec.cell_size;
  const double tx0 = target.x_origin, ty0 = target.y_origin;
  const double tx1 = tx0 + target.ncols * target.cell_size;
  const double ty1 = ty0 + target.nrows * target.cell_size;
  require(sx0 < tx1 && tx0 < sx1 && sy0 < ty1 && ty0 < sy1, "no_overlap",
          "source and target extents do not overlap");

  Raster out(target, 0.0, true);
  std::vector<double> acc(target.size(), 0.0);
  std::vector<long> cnt(target.size(), 0);
  for (int r = 0; r < src.spec.nrows; ++r) {
    for (int c = 0; c < src.spec.ncols; ++c) {
      const std::size_t i = src.spec.index(c, r);
      if (src.missing[i]) continue;
      const double x = src.spec.cell_center_x(c);
      const double y = src.spec.cell_center_y(r);
      const int tc = target.col_of_x(x);
      const int tr = target.row_of_y(y);
      if (!target.contains(tc, tr)) continue;
      const std::size_t t = target.index(tc, tr);
      acc[t] += src.values[i];
      cnt[t] += 1;
    }
  }
  for (std::size_t t = 0; t < target.size(); ++t) {
    if (cnt[t] == 0) continue;
    out.missing[t] = 0;
    out.values[t] = (mode == AggregateMode::sum) ? acc[t] : acc[t] / cnt[t];
  }
  return out;
}

namespace detail {

/// Inverse-distance-squared fill of one cell from its k nearest known cells.
/// Scans outward in Chebyshev rings; a ring at radius R cannot contain a
/// point closer than R cells, so the scan stops once the kept set is safe.
inline double idw_fill_cell(const Raster& layer, int col, int row, int k) {
  struct Hit {
    double d2;
    double value;
  };
  std::vector<Hit> kept;
  const int max_r = std::max(layer.spec.ncols, layer.spec.nrows);
  for (int radius = 1; radius <= max_r; ++radius) {
    if (static_cast<int>(kept.size()) >= k) {
      std::sort(kept.begin(), kept.end(),
                [](const Hit& a, const Hit& b) { return a.d2 < b.d2; });
      const double worst = kept[static_cast<std::size_t>(k) - 1].d2;
      if (worst <= static_cast<double>(radius) * radius) break;
    }
    for (int dr = -radius; dr <= radius; ++dr) {
      for (int dc = -radius; dc <= radius; ++dc) {
        if (std::max(std::abs(dr), std::abs(dc)) != radius) continue;
        const int c = col + dc, r = row + dr;
        if (!layer.spec.contains(c, r) || layer.is_missing(c, r)) continue;
        kept.push_back({static_cast<double>(dr) * dr + static_cast<double>(dc) * dc,
                        layer.at(c, r)});
      }
    }
  }
  if (kept.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(kept.begin(), kept.end(), [](const Hit& a, const Hit& b) {
    return a.d2 < b.d2 || (a.d2 == b.d2 && a.value < b.value);
  });
  if (static_cast<int>(kept.size()) > k) kept.resize(static_cast<std::size_t>(k));
  double wsum = 0.0, vsum = 0.0;
  for (const Hit& h : kept) {
    const double w = 1.0 / h.d2;
    wsum += w;
    vsum += w * h.value;
  }
  return vsum / wsum;
}

}  // namespace detail

/// Fills every missing cell of a layer by inverse-distance weighting over
/// the k nearest non-missing cells. Known cells pass through bit-for-bit;
/// complete layers are returned unchanged (the operation is idempotent).
inline Raster gap_fill_layer(const Raster& layer, int k = 8) {
  if (layer.complete()) return layer;
  require(layer.missing_count() < layer.size(), "all_missing",
          "cannot gap-fill a layer with no data at all");
  Raster out = layer;
  for (int r = 0; r < layer.spec.nrows; ++r) {
    for (int c = 0; c < layer.spec.ncols; ++c) {
      if (!layer.is_missing(c, r)) continue;
      out.set(c, r, detail::idw_fill_cell(layer, c, r, k));
    }
  }
  return out;
}

/// Monthly rasters for one model block, one raster per (covariate, month).
/// Static covariates (lag 0) carry a single raster replicated across months.
struct CovariatePanel {
  std::vector<std::string> names;
  std::vector<int> lags;              // months of lag, aligned with names
  std::vector<int> months;            // global month indices covered
  std::vector<std::vector<Raster>> rasters;  // [covariate][month position]

  std::size_t n_covariates() const { return names.size(); }

  int month_position(int global_month) const {
    for (std::size_t p = 0; p < months.size(); ++p) {
      if (months[p] == global_month) return static_cast<int>(p);
    }
    fail("missing_month", "covariate panel does not cover month " + std::to_string(global_month));
  }

  const Raster& layer(std::size_t cov, int global_month) const {
    return rasters[cov][static_cast<std::size_t>(month_position(global_month))];
  }

  /// The covariate value that applies AT month t is the raster at t - lag.
  const Raster& lagged_layer(std::size_t cov, int global_month) const {
    return layer(cov, global_month - lags[cov]);
  }
};

/**
 * Fills every layer of a panel. Layers with at least one known cell are
 * filled spatially; an all-missing layer falls back to cellwise linear
 * interpolation in time against the nearest known months of the same
 * covariate, and it is an error (naming covariate and month) when no
 * temporal neighbour exists either.
 */
inline CovariatePanel gap_fill(const CovariatePanel& panel, int k = 8) {
  CovariatePanel out = panel;
  for (std::size_t cov = 0; cov < panel.n_covariates(); ++cov) {
    std::vector<std::size_t> deferred;
    for (std::size_t p = 0; p < panel.months.size(); ++p) {
      const Raster& layer = panel.rasters[cov][p];
      if (layer.missing_count() == layer.size()) {
        deferred.push_back(p);
      } else {
        out.rasters[cov][p] = gap_fill_layer(layer, k);
      }
    }
    for (std::size_t p : deferred) {
      long lo = -1, hi = -1;
      for (long q = static_cast<long>(p) - 1; q >= 0; --q) {
        if (panel.rasters[cov][static_cast<std::size_t>(q)].missing_count() <
            panel.rasters[cov][static_cast<std::size_t>(q)].size()) {
          lo = q;
          break;
        }
      }
      for (std::size_t q = p + 1; q < panel.months.size(); ++q) {
        if (panel.rasters[cov][q].missing_count() < panel.rasters[cov][q].size()) {
          hi = static_cast<long>(q);
          break;
        }
      }
      if (lo < 0 && hi < 0) {
        fail("all_missing", "covariate '" + panel.names[cov] + "' has no data in month " +
                                std::to_string(panel.months[p]) + " or any neighbouring month");
      }
      const Raster* a = lo >= 0 ? &out.rasters[cov][static_cast<std::size_t>(lo)] : nullptr;
      const Raster* b = hi >= 0 ? &out.rasters[cov][static_cast<std::size_t>(hi)] : nullptr;
      Raster filled(panel.rasters[cov][p].spec);
      for (std::size_t i = 0; i < filled.size(); ++i) {
        if (a && b) {
          const double t = static_cast<double>(p - static_cast<std::size_t>(lo)) /
                           static_cast<double>(hi - lo);
          filled.values[i] = (1.0 - t) * a->values[i] + t * b->values[i];
        } else {
          filled.values[i] = a ? a->values[i] : b->values[i];
        }
      }
      out.rasters[cov][p] = filled;
    }
  }
  return out;
}

/// Frozen center/scale pairs, one per covariate (NaN scale = pass-through).
struct Standardizer {
  std::vector<std::string> names;
  std::vector<double> means;
  std::vector<double> sds;

  double apply(std::size_t cov, double v) const {
    if (!std::isfinite(sds[cov]) || sds[cov] <= 0.0) return v;
    return (v - means[cov]) / sds[cov];
  }
};

/// Computes per-covariate mean/SD over the given months (typically the first
/// modeled year) and over non-missing cells. `skip` names covariates to leave
/// untransformed (already-bounded transforms such as the temperature ramp).
inline Standardizer fit_standardizer(const CovariatePanel& panel,
                                     const std::vector<int>& months,
                                     const std::vector<std::string>& skip = {}) {
  Standardizer s;
  s.names = panel.names;
  s.means.assign(panel.n_covariates(), 0.0);
  s.sds.assign(panel.n_covariates(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t cov = 0; cov < panel.n_covariates(); ++cov) {
    if (std::find(skip.begin(), skip.end(), panel.names[cov]) != skip.end()) continue;
    double sum = 0.0, sum2 = 0.0;
    long n = 0;
    for (int m : months) {
      const Raster& layer = panel.layer(cov, m);
      for (std::size_t i = 0; i < layer.size(); ++i) {
        if (layer.missing[i]) continue;
        sum += layer.values[i];
        sum2 += layer.values[i] * layer.values[i];
        ++n;
      }
    }
    require(n > 1, "all_missing", "cannot standardize covariate " + panel.names[cov]);
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    s.means[cov] = mean;
    s.sds[cov] = var > 0.0 ? std::sqrt(var) : std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

/**
 * Loads a covariate panel from a JSON manifest:
 *
 *   {
 *     "months": [10, 11, ...],
 *     "covariates": [
 *       {"name": "rainfall", "lag": 1, "files": {"10": "rain_010.asc", ...}},
 *       {"name": "twi", "lag": 0, "file": "twi.asc"}
 *     ]
 *   }
 *
 * Paths are resolved relative to the manifest's directory.
 */
inline CovariatePanel load_covariate_manifest(const std::string& manifest_path) {
  const auto doc = nlohmann::json::parse(read_file_text(manifest_path));
  std::string dir = ".";
  const auto slash = manifest_path.find_last_of('/');
  if (slash != std::string::npos) dir = manifest_path.substr(0, slash);

  CovariatePanel panel;
  for (const auto& m : doc.at("months")) panel.months.push_back(m.get<int>());
  for (const auto& cov : doc.at("covariates")) {
    panel.names.push_back(cov.at("name").get<std::string>());
    panel.lags.push_back(cov.value("lag", 0));
    std::vector<Raster> layers;
    if (cov.contains("file")) {
      const Raster r = read_ascii_grid(dir + "/" + cov.at("file").get<std::string>());
      layers.assign(panel.months.size(), r);
    } else {
      const auto& files = cov.at("files");
      for (int m : panel.months) {
        const std::string key = std::to_string(m);
        require(files.contains(key), "missing_month",
                "covariate " + panel.names.back() + " lacks a raster for month " + key);
        layers.push_back(read_ascii_grid(dir + "/" + files.at(key).get<std::string>()));
      }
    }
    for (const Raster& r : layers) {
      require_compatible(r.spec, layers.front().spec, "covariate manifest");
    }
    panel.rasters.push_back(std::move(layers));
  }
  require(!panel.rasters.empty(), "parse_error", "manifest lists no covariates");
  return panel;
}

}  // namespace algcp
