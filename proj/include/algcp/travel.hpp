#pragma once

#include <cmath>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include <json.hpp>

#include "algcp/facility.hpp"
#include "algcp/grid.hpp"

namespace algcp {

/// Traversal cost in minutes per km; a missing cell is impassable and takes
/// part in no edge (impassability is absence, never an infinite weight).
struct FrictionSurface {
  Raster minutes_per_km;
};

/**
 * Landscape-to-friction configuration. Each landscape layer maps integer
 * class codes to multiplicative factors on the base cost. A cell on a road
 * takes the road multiplier INSTEAD of its land-cover multiplier; all other
 * layers multiply in. A missing land-cover cell is impassable.
 *
 * JSON shape:
 *   {"base_minutes_per_km": 12.0,
 *    "layers": {"landcover": {"1": 1.0, "2": 1.8}, "roads": {"1": 0.2},
 *               "elevation": {...}, "rivers": {...}}}
 */
struct FrictionConfig {
  double base_minutes_per_km = 12.0;
  std::map<std::string, std::map<int, double>> layers;

  static FrictionConfig from_json(const nlohmann::json& doc) {
    FrictionConfig cfg;
    cfg.base_minutes_per_km = doc.value("base_minutes_per_km", 12.0);
    if (doc.contains("layers")) {
      for (auto it = doc.at("layers").begin(); it != doc.at("layers").end(); ++it) {
        std::map<int, double> table;
        for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
          table[std::stoi(jt.key())] = jt.value().get<double>();
        }
        cfg.layers[it.key()] = std::move(table);
      }
    }
    return cfg;
  }
};

inline FrictionSurface build_friction(const std::map<std::string, Raster>& landscape,
                                      const FrictionConfig& config) {
  GridSpec spec;
  bool first = true;
  for (const auto& [name, layer] : landscape) {
    if (first) {
      spec = layer.spec;
      first = false;
    } else {
      require_compatible(spec, layer.spec, "build_friction");
    }
  }
  require(!first, "missing_input", "build_friction needs at least one landscape layer");

  const auto roads = landscape.find("roads");
  FrictionSurface out{Raster(spec, config.base_minutes_per_km)};
  for (std::size_t i = 0; i < spec.size(); ++i) {
    double friction = config.base_minutes_per_km;
    const bool on_road = roads != landscape.end() && !roads->second.missing[i];
    for (const auto& [name, layer] : landscape) {
      if (layer.missing[i]) {
        if (name == "landcover") {
          out.minutes_per_km.missing[i] = 1;  // impassable
        }
        continue;
      }
      if (name == "landcover" && on_road) continue;  // road overrides land cover
      const int code = static_cast<int>(std::llround(layer.values[i]));
      const auto table = config.layers.find(name);
      require(table != config.layers.end(), "unknown_class",
              "no multiplier table for landscape layer '" + name + "'");
      const auto mult = table->second.find(code);
      if (mult == table->second.end()) {
        fail("unknown_class", "layer '" + name + "' has no multiplier for class code " +
                                  std::to_string(code));
      }
      friction *= mult->second;
    }
    out.minutes_per_km.values[i] = friction;
    if (!out.minutes_per_km.missing[i]) {
      require(friction > 0.0 && std::isfinite(friction), "bad_value",
              "cell friction must be positive and finite");
    }
  }
  return out;
}

enum class EdgeMean { arithmetic, harmonic };

/**
 * Implicit 8-connected lattice over the friction grid. An edge's cost is its
 * great-circle length in km (local equirectangular approximation at the
 * grid's central latitude) times the mean of the endpoint frictions, so
 * costs come out in generalized minutes. Diagonal steps use the full
 * hypotenuse of the lattice metric.
 */
struct TransitionGraph {
  Raster friction;  // minutes per km, missing = impassable
  double dx_km = 0.0;
  double dy_km = 0.0;
  EdgeMean mean_kind = EdgeMean::arithmetic;

  static constexpr double kKmPerDegLat = 110.574;
  static constexpr double kKmPerDegLonAtEquator = 111.320;

  static TransitionGraph build(const FrictionSurface& surface,
                               EdgeMean mean_kind = EdgeMean::arithmetic) {
    TransitionGraph g;
    g.friction = surface.minutes_per_km;
    const double lat = g.friction.spec.central_latitude() * M_PI / 180.0;
    g.dx_km = g.friction.spec.cell_size * kKmPerDegLonAtEquator * std::cos(lat);
    g.dy_km = g.friction.spec.cell_size * kKmPerDegLat;
    g.mean_kind = mean_kind;
    return g;
  }

  double edge_cost(std::size_t a, std::size_t b, double len_km) const {
    const double fa = friction.values[a];
    const double fb = friction.values[b];
    const double mean = mean_kind == EdgeMean::arithmetic
                            ? 0.5 * (fa + fb)
                            : 2.0 / (1.0 / fa + 1.0 / fb);
    return len_km * mean;
  }
};

/**
 * Multi-source Dijkstra over the 8-connected lattice. Every cell receives
 * the minimum over sources of its least-cost distance; sources are 0 and
 * unreachable or impassable cells come back missing. The result depends
 * only on the source SET: permuting or duplicating sources cannot change
 * any relaxation, so outputs are bit-identical.
 */
inline Raster least_cost_distances(const std::vector<std::size_t>& sources,
                                   const TransitionGraph& graph) {
  require(!sources.empty(), "empty_sources", "least-cost distances need at least one source");
  const GridSpec& spec = graph.friction.spec;
  for (std::size_t s : sources) {
    require(s < spec.size(), "off_grid", "source cell index out of range");
  }

  const double diag_km = std::hypot(graph.dx_km, graph.dy_km);
  const int dc[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  const int dr[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const double len[8] = {graph.dx_km, graph.dx_km, graph.dy_km, graph.dy_km,
                         diag_km, diag_km, diag_km, diag_km};

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(spec.size(), kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  for (std::size_t s : sources) {
    if (graph.friction.missing[s]) continue;  // a source on impassable ground reaches nothing
    if (dist[s] > 0.0) {
      dist[s] = 0.0;
      heap.push({0.0, s});
    }
  }
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) continue;
    const int uc = spec.col_of_index(u);
    const int ur = spec.row_of_index(u);
    for (int k = 0; k < 8; ++k) {
      const int vc = uc + dc[k], vr = ur + dr[k];
      if (!spec.contains(vc, vr)) continue;
      const std::size_t v = spec.index(vc, vr);
      if (graph.friction.missing[v]) continue;
      const double nd = d + graph.edge_cost(u, v, len[k]);
      if (nd < dist[v]) {
        dist[v] = nd;
        heap.push({nd, v});
      }
    }
  }

  Raster out(spec, 0.0, true);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (dist[i] < kInf) {
      out.values[i] = dist[i];
      out.missing[i] = 0;
    }
  }
  return out;
}

/// Travel cost r(s, t): least-cost minutes from each cell to the nearest
/// facility active at month t (CHWs included on request). Month-to-month
/// changes come entirely from facilities or CHWs becoming active.
inline Raster travel_cost_to_nearest(const FacilityRegistry& registry, int month,
                                     const TransitionGraph& graph,
                                     bool include_chws = false) {
  const auto active = registry.active_indices(month, include_chws);
  require(!active.empty(), "no_active_facility",
          "no facility active at month " + std::to_string(month));
  std::vector<std::size_t> sources;
  sources.reserve(active.size());
  for (std::size_t j : active) {
    sources.push_back(registry.cell_of(j, graph.friction.spec));
  }
  return least_cost_distances(sources, graph);
}

}  // namespace algcp
