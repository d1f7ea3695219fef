#include <catch2/catch_amalgamated.hpp>

#include "algcp/rng.hpp"
#include "algcp/travel.hpp"
#include "support/oracles.hpp"

using namespace algcp;

namespace {

TransitionGraph uniform_graph(int n, double friction = 1.0) {
  GridSpec spec{n, n, 0.0, -static_cast<double>(n) / 2.0 * 0.01, 0.01};
  FrictionSurface s{Raster(spec, friction)};
  return TransitionGraph::build(s);
}

double chamfer_cost(const TransitionGraph& g, int dc, int dr, double friction) {
  const int a = std::abs(dc), b = std::abs(dr);
  const double diag = std::hypot(g.dx_km, g.dy_km);
  const int m = std::min(a, b);
  const double straight = (a > b) ? (a - b) * g.dx_km : (b - a) * g.dy_km;
  return friction * (m * diag + straight);
}

}  // namespace

TEST_CASE("build_friction with unit multipliers returns the base cost", "[travel]") {
  GridSpec spec{3, 3, 0, 0, 1.0};
  FrictionConfig cfg;
  cfg.base_minutes_per_km = 12.0;
  cfg.layers["landcover"] = {{1, 1.0}};
  const FrictionSurface s = build_friction({{"landcover", Raster(spec, 1.0)}}, cfg);
  for (double v : s.minutes_per_km.values) CHECK(v == 12.0);
}

TEST_CASE("road multiplier replaces land cover on road cells", "[travel]") {
  GridSpec spec{3, 1, 0, 0, 1.0};
  FrictionConfig cfg;
  cfg.base_minutes_per_km = 10.0;
  cfg.layers["landcover"] = {{2, 1.8}};
  cfg.layers["roads"] = {{1, 0.2}};
  Raster landcover(spec, 2.0);
  Raster roads(spec, 0.0, true);
  roads.set(1, 0, 1.0);
  const FrictionSurface s = build_friction({{"landcover", landcover}, {"roads", roads}}, cfg);
  CHECK(s.minutes_per_km.values[0] == Catch::Approx(18.0));
  CHECK(s.minutes_per_km.values[1] == Catch::Approx(2.0));  // exactly 0.2 x base
  CHECK(s.minutes_per_km.values[2] == Catch::Approx(18.0));
}

TEST_CASE("mixed 3x3 friction matches a hand-expanded product table", "[travel]") {
  GridSpec spec{3, 3, 0, 0, 1.0};
  FrictionConfig cfg;
  cfg.base_minutes_per_km = 10.0;
  cfg.layers["landcover"] = {{1, 1.0}, {2, 1.5}};
  cfg.layers["rivers"] = {{0, 1.0}, {1, 4.0}};
  Raster landcover(spec), rivers(spec);
  const int lc[9] = {1, 2, 1, 2, 2, 1, 1, 1, 2};
  const int rv[9] = {0, 0, 1, 0, 1, 0, 0, 1, 1};
  for (int i = 0; i < 9; ++i) {
    landcover.values[static_cast<std::size_t>(i)] = lc[i];
    rivers.values[static_cast<std::size_t>(i)] = rv[i];
  }
  const FrictionSurface s = build_friction({{"landcover", landcover}, {"rivers", rivers}}, cfg);
  for (int i = 0; i < 9; ++i) {
    const double expect = 10.0 * (lc[i] == 2 ? 1.5 : 1.0) * (rv[i] == 1 ? 4.0 : 1.0);
    CHECK(s.minutes_per_km.values[static_cast<std::size_t>(i)] == Catch::Approx(expect));
  }
}

TEST_CASE("unknown class codes are reported by value", "[travel]") {
  GridSpec spec{2, 1, 0, 0, 1.0};
  FrictionConfig cfg;
  cfg.layers["landcover"] = {{1, 1.0}};
  Raster landcover(spec, 9.0);
  try {
    build_friction({{"landcover", landcover}}, cfg);
    FAIL("expected unknown_class");
  } catch (const Error& e) {
    CHECK(e.code() == "unknown_class");
    CHECK(std::string(e.what()).find("9") != std::string::npos);
  }
}

TEST_CASE("least-cost distances on uniform friction follow the lattice chamfer", "[travel]") {
  const auto g = uniform_graph(7, 3.0);
  const std::size_t center = g.friction.spec.index(3, 3);
  const Raster d = least_cost_distances({center}, g);
  CHECK(d.values[center] == 0.0);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 7; ++c) {
      CHECK(d.at(c, r) == Catch::Approx(chamfer_cost(g, c - 3, r - 3, 3.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("least-cost distances route around a high-friction barrier", "[travel]") {
  GridSpec spec{3, 3, 0, 0, 0.01};
  Raster fr(spec, 1.0);
  fr.set(1, 1, 500.0);  // the straight line through the middle is ruinous
  const TransitionGraph g = TransitionGraph::build(FrictionSurface{fr});
  const std::size_t from = spec.index(0, 1);
  const Raster d = least_cost_distances({from}, g);
  for (std::size_t to = 0; to < spec.size(); ++to) {
    const double brute = oracle::exhaustive_min_path_cost(g, from, to);
    CHECK(d.values[to] == Catch::Approx(brute).epsilon(1e-12));
    CHECK_FALSE(d.missing[to]);
  }
}

TEST_CASE("empty source sets and off-grid sources are errors", "[travel]") {
  const auto g = uniform_graph(3);
  CHECK_THROWS_AS(least_cost_distances({}, g), Error);
  CHECK_THROWS_AS(least_cost_distances({std::size_t{100}}, g), Error);
}

TEST_CASE("impassable cells are masked, not infinite", "[travel]") {
  GridSpec spec{3, 1, 0, 0, 0.01};
  Raster fr(spec, 1.0);
  fr.set_missing(1, 0);
  const TransitionGraph g = TransitionGraph::build(FrictionSurface{fr});
  const Raster d = least_cost_distances({spec.index(0, 0)}, g);
  CHECK(d.values[0] == 0.0);
  CHECK(d.missing[1]);  // impassable
  CHECK(d.missing[2]);  // unreachable behind the barrier
}

TEST_CASE("enlarging the source set never increases any distance", "[travel]") {
  const auto g = uniform_graph(8);
  std::uint64_t state = 7;
  std::vector<std::size_t> sources{splitmix64(state) % 64};
  Raster prev = least_cost_distances(sources, g);
  for (int step = 0; step < 4; ++step) {
    sources.push_back(splitmix64(state) % 64);
    const Raster next = least_cost_distances(sources, g);
    for (std::size_t i = 0; i < next.size(); ++i) {
      CHECK(next.values[i] <= prev.values[i] + 1e-15);
    }
    prev = next;
  }
}

TEST_CASE("permuting source order leaves output bit-identical", "[travel]") {
  const auto g = uniform_graph(6);
  std::vector<std::size_t> a{3, 17, 29, 35};
  std::vector<std::size_t> b{35, 3, 29, 17};
  const Raster da = least_cost_distances(a, g);
  const Raster db = least_cost_distances(b, g);
  CHECK(da.values == db.values);
  CHECK(da.missing == db.missing);
}

TEST_CASE("Dijkstra equals Bellman-Ford on random 6x6 friction grids", "[travel]") {
  std::uint64_t state = 2024;
  for (int trial = 0; trial < 25; ++trial) {
    GridSpec spec{6, 6, 0, 0, 0.05};
    Raster fr(spec);
    for (std::size_t i = 0; i < fr.size(); ++i) {
      fr.values[i] = 0.5 + static_cast<double>(splitmix64(state) % 1000) / 100.0;
      if (splitmix64(state) % 10 == 0) fr.missing[i] = 1;
    }
    const TransitionGraph g = TransitionGraph::build(FrictionSurface{fr});
    std::vector<std::size_t> sources;
    const std::size_t nsrc = 1 + splitmix64(state) % 3;
    while (sources.size() < nsrc) sources.push_back(splitmix64(state) % spec.size());
    const Raster dj = least_cost_distances(sources, g);
    const Raster bf = oracle::bellman_ford_distances(sources, g);
    for (std::size_t i = 0; i < dj.size(); ++i) {
      CHECK(dj.missing[i] == bf.missing[i]);
      if (!dj.missing[i]) CHECK(dj.values[i] == Catch::Approx(bf.values[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("harmonic edge mean is selectable and differs", "[travel]") {
  GridSpec spec{2, 1, 0, 0, 0.01};
  Raster fr(spec);
  fr.values = {1.0, 3.0};
  const auto ga = TransitionGraph::build(FrictionSurface{fr}, EdgeMean::arithmetic);
  const auto gh = TransitionGraph::build(FrictionSurface{fr}, EdgeMean::harmonic);
  CHECK(ga.edge_cost(0, 1, 1.0) == Catch::Approx(2.0));
  CHECK(gh.edge_cost(0, 1, 1.0) == Catch::Approx(1.5));
}

TEST_CASE("travel cost to nearest facility takes the min over active sources", "[travel]") {
  const auto g = uniform_graph(9);
  const GridSpec& spec = g.friction.spec;

  FacilityRegistry reg;
  reg.n_months = 3;
  Facility f1{"hf1", spec.cell_center_x(1), spec.cell_center_y(1),
              FacilityType::health_center, 0, {1, 1, 1}};
  Facility f2{"hf2", spec.cell_center_x(7), spec.cell_center_y(6),
              FacilityType::health_post, 2, {0, 0, 1}};
  reg.facilities = {f1, f2};
  reg.validate();

  const Raster single = travel_cost_to_nearest(reg, 0, g);
  const Raster oracle_single = least_cost_distances({spec.index(1, 1)}, g);
  CHECK(single.values == oracle_single.values);

  const Raster both = travel_cost_to_nearest(reg, 2, g);
  const Raster a = least_cost_distances({spec.index(1, 1)}, g);
  const Raster b = least_cost_distances({spec.index(7, 6)}, g);
  for (std::size_t i = 0; i < both.size(); ++i) {
    CHECK(both.values[i] == Catch::Approx(std::min(a.values[i], b.values[i])));
    CHECK(both.values[i] <= single.values[i] + 1e-15);  // adding a facility never hurts
  }

  FacilityRegistry none;
  none.n_months = 1;
  none.facilities = {Facility{"x", 0.0, 0.0, FacilityType::chw, 0, {1}}};
  CHECK_THROWS_AS(travel_cost_to_nearest(none, 0, g, /*include_chws=*/false), Error);
}
