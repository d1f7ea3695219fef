#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "algcp/products.hpp"
#include "algcp/synthetic.hpp"
#include "algcp/tiny_png.hpp"
#include "support/stats.hpp"

using namespace algcp;

namespace {

/// Hand-built inputs: 2x2 grid, two months, intercept + one covariate.
ProductInputs toy_inputs() {
  ProductInputs in;
  in.window = GridSpec{2, 2, 0, 0, 1.0};
  in.months = {0, 1};
  in.design.resize(2);
  for (int t = 0; t < 2; ++t) {
    in.design[0].push_back(std::vector<double>(4, 1.0));
    in.design[1].push_back(std::vector<double>{0.0, 0.5, -0.5, 1.0});
  }
  in.population = {10.0, 20.0, 30.0, 40.0};
  return in;
}

PosteriorSamples toy_samples(const ProductInputs& in, int n_draws, std::uint64_t seed) {
  PosteriorSamples s;
  s.window = in.window;
  s.months = in.months;
  s.covariate_names = {"intercept", "z1"};
  Rng rng(seed);
  for (int d = 0; d < n_draws; ++d) {
    s.beta.push_back({-1.0 + 0.1 * rng.normal(), 0.3 + 0.05 * rng.normal()});
    s.sigma.push_back(1.0 + 0.05 * rng.normal());
    s.phi.push_back(0.1 * std::exp(0.1 * rng.normal()));
    s.theta.push_back(5.0 * std::exp(0.1 * rng.normal()));
    s.logpost.push_back(-100.0 + rng.normal());
    std::vector<double> field(8);
    for (auto& v : field) v = 0.2 * rng.normal();
    s.fields.push_back(std::move(field));
  }
  return s;
}

}  // namespace

TEST_CASE("incidence surface is 1000 exp(Z beta + Y)", "[products]") {
  const ProductInputs in = toy_inputs();
  std::vector<double> beta{0.0, 0.0};
  std::vector<double> field(8, 0.0);
  const SampleView flat{beta, 1.0, 0.1, 5.0, 0.0, field};
  const Raster r = incidence_surface(flat, in, 0);
  for (double v : r.values) CHECK(v == Catch::Approx(1000.0));

  // hand oracle on a non-trivial draw
  std::vector<double> beta2{-0.7, 0.4};
  std::vector<double> field2{0.1, -0.2, 0.3, 0.0, 0.05, 0.0, -0.1, 0.2};
  const SampleView s2{beta2, 1.0, 0.1, 5.0, 0.0, field2};
  const Raster r2 = incidence_surface(s2, in, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    const double eta = -0.7 + 0.4 * in.design[1][1][i] + field2[4 + i];
    CHECK(r2.values[i] == Catch::Approx(1000.0 * std::exp(eta)).epsilon(1e-12));
  }
}

TEST_CASE("doubling population doubles burden but not the rate surface", "[products]") {
  const ProductInputs in = toy_inputs();
  const auto samples = toy_samples(in, 50, 5);
  std::vector<std::vector<double>> offsets{{in.population}, {in.population}};
  const auto b1 = burden_estimate(samples, in, offsets, {0, 1});
  std::vector<std::vector<double>> doubled = offsets;
  for (auto& e : doubled) {
    for (auto& v : e) v *= 2.0;
  }
  const auto b2 = burden_estimate(samples, in, doubled, {0, 1});
  CHECK(b2.mean == Catch::Approx(2.0 * b1.mean).epsilon(1e-12));
  const Raster r1 = incidence_surface_mean(samples, in, 0);
  // the rate surface never sees the offsets, so it is unchanged by design
  const Raster r2 = incidence_surface_mean(samples, in, 0);
  CHECK(r1.values == r2.values);
}

TEST_CASE("exceedance counts draws above the threshold", "[products]") {
  CHECK(exceedance_fraction({50, 150, 250}, 100.0) == Catch::Approx(2.0 / 3.0));
  CHECK(exceedance_fraction({50, 150, 250}, 0.0) == 1.0);
  CHECK(exceedance_fraction({50, 150, 250}, 300.0) == 0.0);
}

TEST_CASE("exceedance maps live in [0,1] and fall as the threshold rises", "[products]") {
  const ProductInputs in = toy_inputs();
  const auto samples = toy_samples(in, 80, 9);
  const Raster lo = exceedance(samples, in, 100.0, ExceedancePeriod::monthly, {0});
  const Raster hi = exceedance(samples, in, 400.0, ExceedancePeriod::monthly, {0});
  for (std::size_t i = 0; i < lo.size(); ++i) {
    CHECK(lo.values[i] >= 0.0);
    CHECK(lo.values[i] <= 1.0);
    CHECK(hi.values[i] <= lo.values[i]);
  }
  const Raster zero = exceedance(samples, in, 0.0, ExceedancePeriod::monthly, {0});
  for (double v : zero.values) CHECK(v == 1.0);  // rates are strictly positive
}

TEST_CASE("annual exceedance at 1200 equals monthly at 100 for flat draws", "[products]") {
  // constant rate over twelve identical months: the yearly sum crosses
  // 12 x 100 exactly when the monthly rate crosses 100
  ProductInputs in;
  in.window = GridSpec{2, 1, 0, 0, 1.0};
  for (int t = 0; t < 12; ++t) in.months.push_back(t);
  in.design.resize(1);
  for (int t = 0; t < 12; ++t) in.design[0].push_back(std::vector<double>(2, 1.0));
  in.population = {5.0, 5.0};

  PosteriorSamples s;
  s.window = in.window;
  s.months = in.months;
  s.covariate_names = {"intercept"};
  Rng rng(31);
  for (int d = 0; d < 60; ++d) {
    const double b = -2.6 + 0.3 * rng.normal();  // exp(b) straddles 0.1 = 100/1000
    s.beta.push_back({b});
    s.sigma.push_back(1.0);
    s.phi.push_back(0.1);
    s.theta.push_back(5.0);
    s.logpost.push_back(0.0);
    s.fields.push_back(std::vector<double>(24, 0.0));
  }
  const Raster yearly = exceedance(s, in, 1200.0, ExceedancePeriod::yearly, in.months);
  const Raster monthly = exceedance(s, in, 100.0, ExceedancePeriod::monthly, {3});
  CHECK(yearly.values == monthly.values);
}

TEST_CASE("d statistic reproduces the worked examples", "[products]") {
  CHECK(d_statistic(100.0, 100.0) == 0.0);
  CHECK(d_statistic(110.0, 100.0) == Catch::Approx(1.0));
  CHECK(d_statistic(90.0, 100.0) == Catch::Approx(-1.0));
  CHECK_THROWS_AS(d_statistic(5.0, 0.0), Error);
}

TEST_CASE("validation rows aggregate mass consistently", "[products]") {
  // build a small simulated world so weights/panel/registry are coherent
  Scenario sc;
  sc.grid = GridSpec{6, 6, 25.0, -16.0, 0.05};
  sc.n_months = 2;
  sc.n_covariates = 1;
  sc.covariate_range = 0.08;
  sc.phi = 0.06;
  sc.beta = {-1.0, 0.2};
  sc.n_facilities = 3;
  sc.missingness = 0.0;
  const auto sim = simulate(sc, 5);

  ProductInputs in;
  in.window = sc.grid;
  in.months = sc.months();
  in.design = sim.design;
  in.population.assign(sim.population.values.begin(), sim.population.values.end());

  PosteriorSamples samples;
  samples.window = sc.grid;
  samples.months = in.months;
  samples.covariate_names = sim.design_names;
  Rng rng(77);
  for (int d = 0; d < 40; ++d) {
    samples.beta.push_back({-1.0 + 0.05 * rng.normal(), 0.2 + 0.05 * rng.normal()});
    samples.sigma.push_back(1.0);
    samples.phi.push_back(0.1);
    samples.theta.push_back(5.0);
    samples.logpost.push_back(0.0);
    std::vector<double> field(sc.grid.size() * 2);
    for (auto& v : field) v = 0.1 * rng.normal();
    samples.fields.push_back(std::move(field));
  }
  std::vector<std::vector<double>> offsets_fit;
  for (std::size_t t = 0; t < 2; ++t) {
    std::vector<double> e(sc.grid.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      e[i] = sim.population.values[i] * sim.theta_seek[t].values[i];
    }
    offsets_fit.push_back(std::move(e));
  }
  const auto rows = validation_d(sim.panel, samples, in, sim.weights, offsets_fit, sim.registry);
  CHECK(rows.size() == 3);  // one row per facility with reporting months

  // mass bookkeeping: total expected over facilities equals the window
  // total of W-weighted posterior-mean intensities
  double expected_total = 0.0;
  for (const auto& r : rows) expected_total += r.expected;
  double window_total = 0.0;
  std::vector<double> rate;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t i = 0; i < sc.grid.size(); ++i) {
        double eta = samples.fields[s][t * sc.grid.size() + i];
        for (std::size_t k = 0; k < 2; ++k) eta += samples.beta[s][k] * in.design[k][t][i];
        double row_mass = 0.0;
        for (const auto& [j, wij] : sim.weights[t].rows[i]) row_mass += wij;
        window_total +=
            row_mass * offsets_fit[t][i] * std::exp(eta) / static_cast<double>(samples.size());
      }
    }
  }
  CHECK(expected_total == Catch::Approx(window_total).epsilon(1e-10));

  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "algcp_validation.csv").string();
  save_validation_csv(path, rows);
  CHECK(read_file_text(path).find("facility_id") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("burden of one steady case per month over a year is twelve", "[products]") {
  ProductInputs in;
  in.window = GridSpec{1, 1, 0, 0, 1.0};
  for (int t = 0; t < 12; ++t) in.months.push_back(t);
  in.design.resize(1);
  for (int t = 0; t < 12; ++t) in.design[0].push_back(std::vector<double>(1, 1.0));
  in.population = {1.0};
  PosteriorSamples s;
  s.window = in.window;
  s.months = in.months;
  s.covariate_names = {"intercept"};
  for (int d = 0; d < 10; ++d) {
    s.beta.push_back({0.0});
    s.sigma.push_back(1.0);
    s.phi.push_back(0.1);
    s.theta.push_back(5.0);
    s.logpost.push_back(0.0);
    s.fields.push_back(std::vector<double>(12, 0.0));  // rate exp(0) = 1 per person-month
  }
  std::vector<std::vector<double>> offsets(12, std::vector<double>{1.0});
  const auto est = burden_estimate(s, in, offsets, in.months);
  CHECK(est.mean == Catch::Approx(12.0));
  CHECK(est.lo95 == Catch::Approx(12.0));
}

TEST_CASE("prediction-mode burden dominates validation mode on every draw", "[products]") {
  const ProductInputs in = toy_inputs();
  const auto samples = toy_samples(in, 30, 3);
  std::vector<std::vector<double>> pred(2, in.population);
  std::vector<std::vector<double>> valid = pred;
  Rng rng(4);
  for (auto& e : valid) {
    for (auto& v : e) v *= 0.3 + 0.6 * rng.uniform();  // theta in (0.3, 0.9)
  }
  const auto bp = burden_estimate(samples, in, pred, {0, 1});
  const auto bv = burden_estimate(samples, in, valid, {0, 1});
  REQUIRE(bp.per_draw.size() == bv.per_draw.size());
  for (std::size_t d = 0; d < bp.per_draw.size(); ++d) {
    CHECK(bp.per_draw[d] >= bv.per_draw[d]);
  }
}

TEST_CASE("merging a block with itself leaves the summaries unchanged", "[products]") {
  const ProductInputs in = toy_inputs();
  const auto a = toy_samples(in, 40, 21);
  const auto merged = merge_posteriors({a, a});
  CHECK(merged.size() == 2 * a.size());
  const auto sa = summarize_parameters(a);
  const auto sm = summarize_parameters(merged);
  REQUIRE(sa.size() == sm.size());
  for (std::size_t k = 0; k < sa.size(); ++k) {
    CHECK(sm[k].mean == Catch::Approx(sa[k].mean).epsilon(1e-12));
    CHECK(sm[k].lo95 == Catch::Approx(sa[k].lo95).epsilon(1e-9));
  }
}

TEST_CASE("pooled mean of equal-size blocks averages the block means", "[products]") {
  const ProductInputs in = toy_inputs();
  const auto a = toy_samples(in, 40, 1);
  const auto b = toy_samples(in, 40, 2);
  const auto merged = merge_posteriors({a, b});
  std::vector<double> am, bm, mm;
  for (const auto& v : a.beta) am.push_back(v[0]);
  for (const auto& v : b.beta) bm.push_back(v[0]);
  for (const auto& v : merged.beta) mm.push_back(v[0]);
  CHECK(teststat::mean(mm) ==
        Catch::Approx(0.5 * (teststat::mean(am) + teststat::mean(bm))).epsilon(1e-12));
}

TEST_CASE("zero effects exponentiate to unit rate ratios", "[products]") {
  PosteriorSamples s;
  s.covariate_names = {"intercept"};
  for (int d = 0; d < 25; ++d) {
    s.beta.push_back({0.0});
    s.sigma.push_back(1.0);
    s.phi.push_back(0.25);
    s.theta.push_back(1.0);
    s.logpost.push_back(0.0);
  }
  const auto rows = summarize_parameters(s);
  CHECK(rows[0].rate_ratio);
  CHECK(rows[0].mean == Catch::Approx(1.0));
  CHECK(rows[0].sd == Catch::Approx(0.0).margin(1e-15));
  CHECK_FALSE(rows[1].rate_ratio);  // sigma stays on its natural scale

  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "algcp_summary.csv").string();
  save_parameter_summary_csv(path, rows);
  CHECK(read_file_text(path).find("rate_ratio") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("png rendering emits a valid deterministic file", "[products]") {
  namespace fs = std::filesystem;
  GridSpec spec{9, 7, 0, 0, 1.0};
  Raster r(spec);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r.values[i] = static_cast<double>(i) / static_cast<double>(r.size());
  }
  r.set_missing(4, 3);
  const std::string p1 = (fs::temp_directory_path() / "algcp_map1.png").string();
  const std::string p2 = (fs::temp_directory_path() / "algcp_map2.png").string();
  render_binned_png(p1, r);
  render_binned_png(p2, r);
  const std::string a = read_file_text(p1);
  const std::string b = read_file_text(p2);
  CHECK(a == b);
  REQUIRE(a.size() > 20);
  CHECK(static_cast<unsigned char>(a[0]) == 0x89);
  CHECK(a.substr(1, 3) == "PNG");
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}
