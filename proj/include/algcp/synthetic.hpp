#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "algcp/ascii_grid.hpp"
#include "algcp/chain.hpp"
#include "algcp/choice.hpp"
#include "algcp/covariates.hpp"
#include "algcp/seeking.hpp"
#include "algcp/travel.hpp"

namespace algcp {

/// Deterministic sub-seed derivation for the independent simulation streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t id) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ull * (id + 1));
  return splitmix64(s);
}

/**
 * Ground-truth generator: a full synthetic study area with population,
 * facilities, CHWs, covariates, travel costs, treatment seeking, catchment
 * weights, a latent field, true cell cases and the facility panel the
 * inference path sees. Every piece is a deterministic function of
 * (scenario, seed), and the writers emit the same file formats the
 * inference commands consume.
 */
struct Scenario {
  GridSpec grid{32, 32, 25.0, -16.0, 0.047};
  int block_start = 1;  // first modeled month (global index); covariates reach one month back
  int n_months = 14;
  std::vector<double> beta{-2.3, 0.3, -0.2, 0.15};  // intercept first
  int n_covariates = 3;                             // smooth random fields, standardized
  double covariate_range = 0.4;                     // degrees
  double covariate_theta = 4.0;                     // months
  double sigma = 1.0;
  double phi = 0.1;
  double theta_time = 5.0;
  int n_facilities = 40;
  int n_chws = 0;
  int chw_start_month = 0;
  double missingness = 0.1;
  double population_mean = 60.0;
  double population_sigma = 0.6;
  double friction_minutes_per_km = 3.0;
  double seek_beta0 = 0.46;
  double seek_beta1 = -0.30;
  double seek_cost_scale = 60.0;  // minutes per unit of the seeking covariate
  ChoiceModelParams choice;
  ChwCurve chw_curve{0.0, 0.02};
  double accessibility_ceiling = 1505.0;
  bool standardize_covariates = true;

  std::vector<int> months() const {
    std::vector<int> m;
    for (int t = 0; t < n_months; ++t) m.push_back(block_start + t);
    return m;
  }

  nlohmann::json to_json() const {
    return {{"grid", {grid.ncols, grid.nrows, grid.x_origin, grid.y_origin, grid.cell_size}},
            {"block_start", block_start},
            {"n_months", n_months},
            {"beta", beta},
            {"n_covariates", n_covariates},
            {"covariate_range", covariate_range},
            {"covariate_theta", covariate_theta},
            {"sigma", sigma},
            {"phi", phi},
            {"theta_time", theta_time},
            {"n_facilities", n_facilities},
            {"n_chws", n_chws},
            {"chw_start_month", chw_start_month},
            {"missingness", missingness},
            {"population_mean", population_mean},
            {"population_sigma", population_sigma},
            {"friction_minutes_per_km", friction_minutes_per_km},
            {"seek_beta0", seek_beta0},
            {"seek_beta1", seek_beta1},
            {"seek_cost_scale", seek_cost_scale},
            {"choice", choice.to_json()},
            {"chw_curve", {chw_curve.intercept, chw_curve.slope}},
            {"accessibility_ceiling", accessibility_ceiling},
            {"standardize_covariates", standardize_covariates}};
  }

  static Scenario from_json(const nlohmann::json& j) {
    Scenario s;
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      s.grid = GridSpec{g.at(0).get<int>(), g.at(1).get<int>(), g.at(2).get<double>(),
                        g.at(3).get<double>(), g.at(4).get<double>()};
    }
    s.block_start = j.value("block_start", s.block_start);
    s.n_months = j.value("n_months", s.n_months);
    if (j.contains("beta")) s.beta = j.at("beta").get<std::vector<double>>();
    s.n_covariates = j.value("n_covariates", s.n_covariates);
    s.covariate_range = j.value("covariate_range", s.covariate_range);
    s.covariate_theta = j.value("covariate_theta", s.covariate_theta);
    s.sigma = j.value("sigma", s.sigma);
    s.phi = j.value("phi", s.phi);
    s.theta_time = j.value("theta_time", s.theta_time);
    s.n_facilities = j.value("n_facilities", s.n_facilities);
    s.n_chws = j.value("n_chws", s.n_chws);
    s.chw_start_month = j.value("chw_start_month", s.chw_start_month);
    s.missingness = j.value("missingness", s.missingness);
    s.population_mean = j.value("population_mean", s.population_mean);
    s.population_sigma = j.value("population_sigma", s.population_sigma);
    s.friction_minutes_per_km = j.value("friction_minutes_per_km", s.friction_minutes_per_km);
    s.seek_beta0 = j.value("seek_beta0", s.seek_beta0);
    s.seek_beta1 = j.value("seek_beta1", s.seek_beta1);
    s.seek_cost_scale = j.value("seek_cost_scale", s.seek_cost_scale);
    if (j.contains("choice")) s.choice = ChoiceModelParams::from_json(j.at("choice"));
    if (j.contains("chw_curve")) {
      s.chw_curve.intercept = j.at("chw_curve").at(0).get<double>();
      s.chw_curve.slope = j.at("chw_curve").at(1).get<double>();
    }
    s.accessibility_ceiling = j.value("accessibility_ceiling", s.accessibility_ceiling);
    s.standardize_covariates = j.value("standardize_covariates", s.standardize_covariates);
    require(s.beta.size() == static_cast<std::size_t>(s.n_covariates) + 1, "bad_params",
            "beta must have one entry per covariate plus the intercept");
    return s;
  }
};

struct SimulationOutput {
  Scenario scenario;
  std::uint64_t seed = 0;

  Raster population;
  FacilityRegistry registry;
  TransitionGraph graph;
  std::vector<Raster> travel_by_facility;
  std::vector<Raster> theta_seek;            // per block month
  std::vector<WeightMatrix> weights;         // per block month
  CovariatePanel covariates;                 // raw rasters, months block_start-1 .. end
  Standardizer standardizer;
  std::vector<std::string> design_names;     // intercept + covariates
  std::vector<std::vector<std::vector<double>>> design;  // [k][t][i]
  std::vector<std::vector<double>> true_y;    // latent field per month (window)
  std::vector<std::vector<double>> true_rate; // exp(Z beta + Y) per month
  std::vector<std::vector<double>> true_cases;    // X[t][i]
  std::vector<std::vector<double>> seekers;       // S[t][i]
  ObservationPanel full_panel;                // all facility-month totals
  ObservationPanel panel;                     // with missingness applied

  double total_cases(int t) const { return pairwise_sum(true_cases[static_cast<std::size_t>(t)]); }
  double total_seekers(int t) const { return pairwise_sum(seekers[static_cast<std::size_t>(t)]); }
};

/// Design matrix assembly shared by simulation and the fitting pipeline:
/// an intercept column plus the (optionally standardized) lagged covariates.
inline std::vector<std::vector<std::vector<double>>> build_design(
    const CovariatePanel& panel, const Standardizer& stdz, const std::vector<int>& months) {
  std::vector<std::vector<std::vector<double>>> design;
  const GridSpec& spec = panel.rasters.at(0).at(0).spec;
  design.push_back(std::vector<std::vector<double>>(
      months.size(), std::vector<double>(spec.size(), 1.0)));
  for (std::size_t k = 0; k < panel.n_covariates(); ++k) {
    std::vector<std::vector<double>> zk;
    for (int m : months) {
      const Raster& layer = panel.lagged_layer(k, m);
      require(layer.complete(), "all_missing",
              "covariate " + panel.names[k] + " still has gaps at month " + std::to_string(m));
      std::vector<double> z(layer.size());
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = stdz.apply(k, layer.values[i]);
      zk.push_back(std::move(z));
    }
    design.push_back(std::move(zk));
  }
  return design;
}

inline SimulationOutput simulate(const Scenario& sc, std::uint64_t seed) {
  sc.grid.validate();
  SimulationOutput out;
  out.scenario = sc;
  out.seed = seed;
  const std::size_t n = sc.grid.size();
  const int T = sc.n_months;
  const auto months = sc.months();

  // population: log-Gaussian around the configured mean
  {
    LgcpParams p;
    p.sigma = sc.population_sigma;
    p.phi = std::max(sc.grid.cell_size * 2.0, 0.2 * sc.grid.ncols * sc.grid.cell_size);
    p.theta_time = 1.0;
    const auto g = field_sample(p, sc.grid, 1, derive_seed(seed, 1));
    out.population = Raster(sc.grid);
    for (std::size_t i = 0; i < n; ++i) {
      out.population.values[i] = sc.population_mean * std::exp(g.y[0][i]);
    }
  }

  // facilities and CHWs at distinct random cells
  {
    Rng rng = Rng::stream(seed, 2);
    out.registry.n_months = sc.block_start + T;
    std::vector<std::size_t> taken;
    auto fresh_cell = [&]() {
      while (true) {
        const std::size_t c = rng.next_u64() % n;
        if (std::find(taken.begin(), taken.end(), c) == taken.end()) {
          taken.push_back(c);
          return c;
        }
      }
    };
    for (int j = 0; j < sc.n_facilities; ++j) {
      const std::size_t cell = fresh_cell();
      Facility f;
      char buf[16];
      std::snprintf(buf, sizeof buf, "hf%03d", j);
      f.id = buf;
      f.lon = sc.grid.cell_center_x(sc.grid.col_of_index(cell));
      f.lat = sc.grid.cell_center_y(sc.grid.row_of_index(cell));
      const double u = rng.uniform();
      f.type = u < 0.1 ? FacilityType::hospital
                       : (u < 0.7 ? FacilityType::health_center : FacilityType::health_post);
      f.first_active_month = 0;
      f.reporting.assign(static_cast<std::size_t>(out.registry.n_months), 0);
      out.registry.facilities.push_back(std::move(f));
    }
    for (int c = 0; c < sc.n_chws; ++c) {
      const std::size_t cell = fresh_cell();
      Facility f;
      char buf[16];
      std::snprintf(buf, sizeof buf, "chw%03d", c);
      f.id = buf;
      f.lon = sc.grid.cell_center_x(sc.grid.col_of_index(cell));
      f.lat = sc.grid.cell_center_y(sc.grid.row_of_index(cell));
      f.type = FacilityType::chw;
      f.first_active_month = sc.chw_start_month;
      f.reporting.assign(static_cast<std::size_t>(out.registry.n_months), 0);
      out.registry.facilities.push_back(std::move(f));
    }
  }

  // uniform friction and per-facility least-cost rasters
  out.graph = TransitionGraph::build(
      FrictionSurface{Raster(sc.grid, sc.friction_minutes_per_km)});
  for (std::size_t j = 0; j < out.registry.size(); ++j) {
    out.travel_by_facility.push_back(
        least_cost_distances({out.registry.cell_of(j, sc.grid)}, out.graph));
  }

  // treatment-seeking surface per month from the fixed-effects model
  for (int t = 0; t < T; ++t) {
    const Raster nearest =
        travel_cost_to_nearest(out.registry, months[static_cast<std::size_t>(t)], out.graph,
                               /*include_chws=*/true);
    TreatmentSeekingParams sp;
    sp.beta0 = sc.seek_beta0;
    sp.beta1 = sc.seek_beta1;
    sp.coarse_spec = GridSpec{1, 1, 1000.0, 1000.0, 1.0};  // no spatial field in simulation
    sp.f1 = {0.0};
    sp.f2 = {0.0};
    Raster scaled = nearest;
    for (auto& v : scaled.values) v /= sc.seek_cost_scale;
    out.theta_seek.push_back(predict_theta_surface(sp, scaled, 0).theta);
  }

  // catchment weights per month (CHW adjustment when CHWs exist)
  for (int t = 0; t < T; ++t) {
    WeightBuildOptions opts;
    opts.accessibility_ceiling_minutes = sc.accessibility_ceiling;
    WeightMatrix w = build_weight_matrix(out.registry, sc.choice, out.travel_by_facility,
                                         out.population, months[static_cast<std::size_t>(t)],
                                         opts);
    if (sc.n_chws > 0) {
      w = chw_adjust(w, out.registry, out.travel_by_facility,
                     months[static_cast<std::size_t>(t)], sc.chw_curve);
    }
    out.weights.push_back(std::move(w));
  }

  // smooth covariate fields over block_start-1 .. end (lag-1 convention)
  {
    out.covariates.months.clear();
    for (int m = sc.block_start - 1; m <= months.back(); ++m) {
      out.covariates.months.push_back(m);
    }
    for (int k = 0; k < sc.n_covariates; ++k) {
      out.covariates.names.push_back("z" + std::to_string(k + 1));
      out.covariates.lags.push_back(1);
      LgcpParams p;
      p.sigma = 1.0;
      p.phi = sc.covariate_range;
      p.theta_time = sc.covariate_theta;
      const auto g = field_sample(p, sc.grid, static_cast<int>(out.covariates.months.size()),
                                  derive_seed(seed, 100 + static_cast<std::uint64_t>(k)));
      std::vector<Raster> layers;
      for (std::size_t t = 0; t < out.covariates.months.size(); ++t) {
        Raster r(sc.grid);
        for (std::size_t i = 0; i < n; ++i) {
          r.values[i] = g.y[t][i] + 0.5;  // the unit-sigma sampler centers at -1/2
        }
        layers.push_back(std::move(r));
      }
      out.covariates.rasters.push_back(std::move(layers));
    }
    std::vector<int> first_year;
    for (int t = 0; t < std::min(T, 12); ++t) first_year.push_back(months[static_cast<std::size_t>(t)]);
    out.standardizer = sc.standardize_covariates
                           ? fit_standardizer(out.covariates, first_year)
                           : Standardizer{out.covariates.names,
                                          std::vector<double>(out.covariates.names.size(), 0.0),
                                          std::vector<double>(
                                              out.covariates.names.size(),
                                              std::numeric_limits<double>::quiet_NaN())};
    out.design = build_design(out.covariates, out.standardizer, months);
    out.design_names.push_back("intercept");
    for (const auto& nm : out.covariates.names) out.design_names.push_back(nm);
  }

  // latent field and true cases
  {
    LgcpParams p;
    p.sigma = sc.sigma;
    p.phi = sc.phi;
    p.theta_time = sc.theta_time;
    const auto field = field_sample(p, sc.grid, T, derive_seed(seed, 3));
    out.true_y = field.y;
    Rng case_rng = Rng::stream(seed, 4);
    Rng seek_rng = Rng::stream(seed, 5);
    for (int t = 0; t < T; ++t) {
      std::vector<double> rate(n), cases(n), seekers(n);
      for (std::size_t i = 0; i < n; ++i) {
        double eta = out.true_y[static_cast<std::size_t>(t)][i];
        for (std::size_t k = 0; k < out.design.size(); ++k) {
          eta += sc.beta[k] * out.design[k][static_cast<std::size_t>(t)][i];
        }
        rate[i] = std::exp(eta);
        const double lambda = out.population.values[i] * rate[i];
        cases[i] = static_cast<double>(case_rng.poisson(lambda));
        seekers[i] = static_cast<double>(seek_rng.binomial(
            static_cast<long>(cases[i]), out.theta_seek[static_cast<std::size_t>(t)].values[i]));
      }
      out.true_rate.push_back(std::move(rate));
      out.true_cases.push_back(std::move(cases));
      out.seekers.push_back(std::move(seekers));
    }
  }

  // allocate seekers to facilities through W, then mask non-reporters
  {
    std::vector<std::string> ids;
    for (const auto& f : out.registry.facilities) ids.push_back(f.id);
    out.full_panel = ObservationPanel(ids, months);
    Rng alloc_rng = Rng::stream(seed, 6);
    for (int t = 0; t < T; ++t) {
      std::vector<double> totals(out.registry.size(), 0.0);
      const WeightMatrix& w = out.weights[static_cast<std::size_t>(t)];
      for (std::size_t i = 0; i < n; ++i) {
        const long s = static_cast<long>(out.seekers[static_cast<std::size_t>(t)][i]);
        if (s == 0 || w.rows[i].empty()) continue;
        std::vector<double> probs(w.rows[i].size());
        for (std::size_t k = 0; k < probs.size(); ++k) probs[k] = w.rows[i][k].second;
        const auto alloc = alloc_rng.multinomial(s, probs);
        for (std::size_t k = 0; k < alloc.size(); ++k) {
          totals[static_cast<std::size_t>(w.rows[i][k].first)] +=
              static_cast<double>(alloc[k]);
        }
      }
      for (std::size_t j = 0; j < out.registry.size(); ++j) {
        if (out.registry.active_at(j, months[static_cast<std::size_t>(t)])) {
          out.full_panel.set(j, static_cast<std::size_t>(t), totals[j]);
        }
      }
    }
    Rng miss_rng = Rng::stream(seed, 7);
    out.panel = out.full_panel;
    for (std::size_t j = 0; j < out.registry.size(); ++j) {
      for (int t = 0; t < T; ++t) {
        const int month = months[static_cast<std::size_t>(t)];
        if (!out.registry.active_at(j, month)) continue;
        if (miss_rng.uniform() < sc.missingness) {
          out.panel.set_missing(j, static_cast<std::size_t>(t));
        } else {
          out.registry.facilities[j].reporting[static_cast<std::size_t>(month)] = 1;
        }
      }
    }
  }
  return out;
}

/// Bundles the simulation into the engine's input structure, with offsets
/// population x theta_seek (fitting mode).
inline LgcpData to_lgcp_data(const SimulationOutput& sim) {
  LgcpData d;
  d.window = sim.scenario.grid;
  d.months = sim.scenario.months();
  d.weights = sim.weights;
  for (std::size_t t = 0; t < d.months.size(); ++t) {
    std::vector<double> e(sim.population.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      e[i] = sim.population.values[i] * sim.theta_seek[t].values[i];
    }
    d.offsets.push_back(std::move(e));
  }
  d.covariate_names = sim.design_names;
  d.design = sim.design;
  d.panel = sim.panel;
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Recovery reporting
// ---------------------------------------------------------------------------

struct RecoveryRow {
  std::string name;
  double truth = 0.0;
  double posterior_mean = 0.0;
  double lo95 = 0.0, hi95 = 0.0;
  bool covered = false;
};

struct RecoveryReport {
  std::vector<RecoveryRow> rows;
  double incidence_correlation = 0.0;  // true vs posterior-mean cell-month rates
  bool all_covered() const {
    for (const auto& r : rows) {
      if (!r.covered) return false;
    }
    return true;
  }
};

namespace detail {

inline RecoveryRow recovery_row(const std::string& name, double truth,
                                std::vector<double> draws) {
  RecoveryRow row;
  row.name = name;
  row.truth = truth;
  std::sort(draws.begin(), draws.end());
  double s = 0.0;
  for (double v : draws) s += v;
  row.posterior_mean = s / static_cast<double>(draws.size());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(draws.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return (1 - frac) * draws[lo] + frac * draws[std::min(lo + 1, draws.size() - 1)];
  };
  row.lo95 = q(0.025);
  row.hi95 = q(0.975);
  row.covered = truth >= row.lo95 && truth <= row.hi95;
  return row;
}

}  // namespace detail

/// Coverage/bias table per parameter plus the correlation between true and
/// posterior-mean incidence over cell-months (requires recorded fields).
inline RecoveryReport recovery_report(const SimulationOutput& sim,
                                      const PosteriorSamples& samples) {
  require(samples.size() >= 10, "bad_params", "too few retained draws for a recovery report");
  RecoveryReport rep;
  for (std::size_t k = 0; k < sim.design_names.size(); ++k) {
    std::vector<double> draws;
    for (const auto& b : samples.beta) draws.push_back(b[k]);
    rep.rows.push_back(
        detail::recovery_row("beta_" + sim.design_names[k], sim.scenario.beta[k], draws));
  }
  rep.rows.push_back(detail::recovery_row("sigma", sim.scenario.sigma, samples.sigma));
  rep.rows.push_back(detail::recovery_row("phi", sim.scenario.phi, samples.phi));
  rep.rows.push_back(detail::recovery_row("theta_time", sim.scenario.theta_time, samples.theta));

  if (!samples.fields.empty()) {
    const std::size_t n = sim.scenario.grid.size();
    const std::size_t T = static_cast<std::size_t>(sim.scenario.n_months);
    std::vector<double> post_rate(n * T, 0.0);
    for (std::size_t s = 0; s < samples.size(); ++s) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          double eta = samples.fields[s][t * n + i];
          for (std::size_t k = 0; k < samples.beta[s].size(); ++k) {
            eta += samples.beta[s][k] * sim.design[k][t][i];
          }
          post_rate[t * n + i] += std::exp(eta) / static_cast<double>(samples.size());
        }
      }
    }
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const double m = static_cast<double>(n * T);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        const double x = sim.true_rate[t][i];
        const double y = post_rate[t * n + i];
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
      }
    }
    const double cov = sxy / m - (sx / m) * (sy / m);
    const double vx = sxx / m - (sx / m) * (sx / m);
    const double vy = syy / m - (sy / m) * (sy / m);
    rep.incidence_correlation = cov / std::sqrt(std::max(1e-30, vx * vy));
  }
  return rep;
}

inline void save_recovery_csv(const std::string& path, const RecoveryReport& rep) {
  std::ostringstream out;
  out << "parameter,truth,posterior_mean,lo95,hi95,covered\n";
  char buf[40];
  for (const auto& r : rep.rows) {
    out << r.name;
    for (double v : {r.truth, r.posterior_mean, r.lo95, r.hi95}) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      out << ',' << buf;
    }
    out << ',' << (r.covered ? 1 : 0) << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.6f", rep.incidence_correlation);
  out << "incidence_correlation," << buf << ",,,,\n";
  write_file_text(path, out.str());
}

}  // namespace algcp
