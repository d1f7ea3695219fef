#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "algcp/seeking.hpp"
#include "support/stats.hpp"

using namespace algcp;

namespace {

struct SimulatedSurvey {
  std::vector<SeekObservation> obs;
  double beta0, beta1;
};

/// Survey draws from the model itself (f1, f2 at modest magnitudes).
SimulatedSurvey simulate_survey(const GridSpec& coarse, int n_months, std::size_t n,
                                std::uint64_t seed, double beta0 = 0.5, double beta1 = -0.30) {
  Rng rng = Rng::stream(seed, 0x737276ull);
  std::vector<double> f1(coarse.size());
  for (auto& v : f1) v = 0.4 * rng.normal();
  std::vector<double> f2(static_cast<std::size_t>(n_months), 0.0);
  for (int t = 1; t < n_months; ++t) {
    f2[static_cast<std::size_t>(t)] = f2[static_cast<std::size_t>(t - 1)] + 0.15 * rng.normal();
  }
  SimulatedSurvey out;
  out.beta0 = beta0;
  out.beta1 = beta1;
  for (std::size_t k = 0; k < n; ++k) {
    SeekObservation o;
    o.cell = rng.next_u64() % coarse.size();
    o.month = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n_months));
    o.travel_cost = 10.0 * rng.exponential();
    const double eta = beta0 + beta1 * o.travel_cost + f1[o.cell] +
                       f2[static_cast<std::size_t>(o.month)];
    o.sought = rng.uniform() < 1.0 / (1.0 + std::exp(-eta));
    out.obs.push_back(o);
  }
  return out;
}

}  // namespace

TEST_CASE("theta surface evaluates the logit link", "[seeking]") {
  TreatmentSeekingParams p;
  p.beta0 = 0.46;  // table-default intercept
  p.beta1 = 0.0;
  p.coarse_spec = GridSpec{1, 1, 0, 0, 1.0};
  p.f1 = {0.0};
  p.f2 = {0.0};
  GridSpec spec{3, 2, 0, 0, 0.1};
  const auto surface = predict_theta_surface(p, Raster(spec, 0.0), 0);
  CHECK(surface.warnings.empty());
  for (double v : surface.theta.values) {
    CHECK(v == Catch::Approx(1.0 / (1.0 + std::exp(-0.46))));
    CHECK(v == Catch::Approx(0.613).margin(0.001));
  }
}

TEST_CASE("beta1 = 0 gives a spatially constant surface apart from f1", "[seeking]") {
  TreatmentSeekingParams p;
  p.beta0 = 0.2;
  p.beta1 = 0.0;
  p.coarse_spec = GridSpec{1, 1, 50, 50, 1.0};  // far away: f1 contributes 0 everywhere
  p.f1 = {2.0};
  p.f2 = {0.0, 0.3};
  GridSpec spec{4, 4, 0, 0, 0.1};
  Raster travel(spec);
  for (std::size_t i = 0; i < travel.size(); ++i) travel.values[i] = 100.0 * (i % 7);
  const auto surface = predict_theta_surface(p, travel, 1);
  for (double v : surface.theta.values) {
    CHECK(v == Catch::Approx(surface.theta.values[0]));
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("surface is monotone non-increasing in travel cost when beta1 < 0", "[seeking]") {
  TreatmentSeekingParams p;
  p.beta0 = 1.0;
  p.beta1 = -0.3;
  p.coarse_spec = GridSpec{2, 2, 0, 0, 0.2};
  p.f1 = {0.1, -0.2, 0.3, 0.0};
  p.f2 = {0.0};
  GridSpec spec{4, 4, 0, 0, 0.1};
  Raster lo(spec), hi(spec);
  Rng rng(5);
  for (std::size_t i = 0; i < lo.size(); ++i) {
    lo.values[i] = 20.0 * rng.uniform();
    hi.values[i] = lo.values[i] + 5.0;  // raise every cell's cost
  }
  const auto a = predict_theta_surface(p, lo, 0);
  const auto b = predict_theta_surface(p, hi, 0);
  for (std::size_t i = 0; i < lo.size(); ++i) {
    CHECK(b.theta.values[i] < a.theta.values[i]);
  }
}

TEST_CASE("months beyond the fitted range reuse the last f2 with a warning", "[seeking]") {
  TreatmentSeekingParams p;
  p.beta0 = 0.0;
  p.beta1 = 0.0;
  p.coarse_spec = GridSpec{1, 1, 0, 0, 1.0};
  p.f1 = {0.0};
  p.f2 = {0.0, 0.5, 1.0};
  GridSpec spec{2, 1, 0, 0, 0.1};
  const auto in_range = predict_theta_surface(p, Raster(spec, 0.0), 2);
  const auto beyond = predict_theta_surface(p, Raster(spec, 0.0), 7);
  CHECK(in_range.warnings.empty());
  REQUIRE(beyond.warnings.size() == 1);
  CHECK(beyond.theta.values == in_range.theta.values);
}

TEST_CASE("map fit recovers the travel-cost effect within its interval", "[seeking]") {
  // simulate-and-refit: the true beta1 must land inside the reported 95%
  // interval in at least 18 of 20 replicates.
  const GridSpec coarse{4, 4, 0, 0, 0.5};
  const int n_months = 6;
  int covered = 0;
  SeekingFitOptions opts;
  opts.optimize_hypers = false;  // fixed at the generator's magnitudes
  for (int rep = 0; rep < 20; ++rep) {
    const auto survey =
        simulate_survey(coarse, n_months, 800, 1000 + static_cast<std::uint64_t>(rep));
    const auto fit = fit_treatment_seeking(survey.obs, coarse, n_months, opts);
    if (survey.beta1 >= fit.beta1_ci95[0] && survey.beta1 <= fit.beta1_ci95[1]) ++covered;
  }
  CHECK(covered >= 18);
}

TEST_CASE("map gradient is numerically zero at the optimum", "[seeking]") {
  const GridSpec coarse{3, 3, 0, 0, 0.5};
  const auto survey = simulate_survey(coarse, 4, 500, 77);
  SeekingFitOptions opts;
  opts.optimize_hypers = false;
  const auto fit = fit_treatment_seeking(survey.obs, coarse, 4, opts);
  CHECK(fit.max_abs_gradient < 1e-6 * (1.0 + static_cast<double>(survey.obs.size())));
}

TEST_CASE("all-sought data with weak priors pushes theta above one half", "[seeking]") {
  const GridSpec coarse{2, 2, 0, 0, 0.5};
  std::vector<SeekObservation> obs;
  Rng rng(31);
  for (int k = 0; k < 200; ++k) {
    obs.push_back({rng.next_u64() % 4, static_cast<int>(rng.next_u64() % 3), true,
                   5.0 * rng.uniform()});
  }
  // both outcomes must be present by precondition
  obs.push_back({0, 0, false, 1.0});
  SeekingFitOptions opts;
  opts.optimize_hypers = false;
  const auto fit = fit_treatment_seeking(obs, coarse, 3, opts);
  Raster travel(GridSpec{2, 2, 0, 0, 0.5});
  for (std::size_t i = 0; i < 4; ++i) travel.values[i] = 2.0;
  const auto surface = predict_theta_surface(fit.params, travel, 0);
  for (double v : surface.theta.values) CHECK(v > 0.5);
}

TEST_CASE("single-outcome data are rejected up front", "[seeking]") {
  const GridSpec coarse{2, 2, 0, 0, 0.5};
  std::vector<SeekObservation> obs;
  for (int k = 0; k < 10; ++k) obs.push_back({0, 0, true, 1.0});
  CHECK_THROWS_AS(fit_treatment_seeking(obs, coarse, 1, {}), Error);
}

TEST_CASE("adding a constant to travel cost lowers theta when beta1 < 0", "[seeking]") {
  // fixed-effects-only check of logit monotonicity on the fitted params
  TreatmentSeekingParams p;
  p.beta0 = 0.8;
  p.beta1 = -0.25;
  p.coarse_spec = GridSpec{1, 1, 0, 0, 1.0};
  p.f1 = {0.0};
  p.f2 = {0.0};
  GridSpec spec{3, 3, 0, 0, 0.1};
  Raster base(spec);
  Rng rng(17);
  for (auto& v : base.values) v = 10.0 * rng.uniform();
  Raster shifted = base;
  for (auto& v : shifted.values) v += 3.0;
  const auto a = predict_theta_surface(p, base, 0);
  const auto b = predict_theta_surface(p, shifted, 0);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(b.theta.values[i] < a.theta.values[i]);
  }
}

TEST_CASE("random-walk prior distinguishes ordered from shuffled paths", "[seeking]") {
  const std::vector<double> smooth{0.0, 0.1, 0.25, 0.3, 0.42, 0.5};
  std::vector<double> shuffled{0.3, 0.0, 0.42, 0.1, 0.5, 0.25};
  const double lp_smooth = random_walk_log_prior(smooth, 0.04);
  const double lp_shuffled = random_walk_log_prior(shuffled, 0.04);
  CHECK(lp_smooth != lp_shuffled);
  CHECK(lp_smooth > lp_shuffled);  // the walk prefers small increments
}

TEST_CASE("hyper optimization runs and returns positive variances", "[seeking]") {
  const GridSpec coarse{2, 2, 0, 0, 0.5};
  const auto survey = simulate_survey(coarse, 3, 400, 11);
  SeekingFitOptions opts;
  opts.optimize_hypers = true;
  const auto fit = fit_treatment_seeking(survey.obs, coarse, 3, opts);
  CHECK(fit.params.sigma2_s > 0.0);
  CHECK(fit.params.ell_s > 0.0);
  CHECK(fit.params.sigma2_t > 0.0);
  CHECK(std::isfinite(fit.beta1_sd));
}

TEST_CASE("mcmc mode agrees with the map fit on the travel effect", "[seeking]") {
  const GridSpec coarse{2, 2, 0, 0, 0.5};
  const auto survey = simulate_survey(coarse, 3, 600, 23);
  SeekingFitOptions map_opts;
  map_opts.optimize_hypers = false;
  const auto map_fit = fit_treatment_seeking(survey.obs, coarse, 3, map_opts);
  SeekingFitOptions mcmc_opts = map_opts;
  mcmc_opts.mcmc = true;
  mcmc_opts.mcmc_iterations = 30000;
  mcmc_opts.mcmc_burnin = 10000;
  mcmc_opts.seed = 5;
  const auto mcmc_fit = fit_treatment_seeking(survey.obs, coarse, 3, mcmc_opts);
  REQUIRE_FALSE(mcmc_fit.beta1_draws.empty());
  CHECK(std::fabs(mcmc_fit.params.beta1 - map_fit.params.beta1) <
        3.0 * std::max(0.02, map_fit.beta1_sd));
}

TEST_CASE("seek observation csv loads with and without travel costs", "[seeking]") {
  namespace fs = std::filesystem;
  const GridSpec coarse{2, 2, 0, 0, 1.0};
  const std::string path = (fs::temp_directory_path() / "algcp_seek.csv").string();
  write_file_text(path,
                  "lon,lat,month,sought,travel_cost\n"
                  "0.5,0.5,0,1,12.5\n"
                  "1.5,1.5,1,0,\n");
  std::vector<Raster> travel{Raster(coarse, 3.0), Raster(coarse, 7.0)};
  const auto obs = load_seek_observations_csv(path, coarse, &travel);
  REQUIRE(obs.size() == 2);
  CHECK(obs[0].travel_cost == 12.5);
  CHECK(obs[0].sought);
  CHECK(obs[1].travel_cost == 7.0);  // filled from the month-1 raster
  CHECK_FALSE(obs[1].sought);
  std::remove(path.c_str());
}
