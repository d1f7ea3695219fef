#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "algcp/products.hpp"
#include "algcp/synthetic.hpp"
#include "algcp/tiny_png.hpp"

namespace algcp {

/**
 * A run manifest fully determines a run: input paths, block definition,
 * module configuration, seed and output directory. Every consumed input
 * file's content hash lands in <out>/manifest.resolved.json; re-running
 * into the same directory verifies those hashes and errors on mismatch,
 * so run directories stay append-only and auditable.
 */
class Pipeline {
 public:
  static Pipeline load(const std::string& manifest_path, std::uint64_t seed_override = 0,
                       bool has_seed = false, int threads_override = 0,
                       const std::string& out_override = "") {
    Pipeline p;
    p.manifest_path_ = manifest_path;
    p.doc_ = nlohmann::json::parse(read_file_text(manifest_path));
    const auto slash = manifest_path.find_last_of('/');
    p.dir_ = slash == std::string::npos ? "." : manifest_path.substr(0, slash);
    p.seed_ = has_seed ? seed_override : p.doc_.value("seed", 1ull);
    p.threads_ = threads_override > 0 ? threads_override : p.doc_.value("threads", 1);
    std::string out = out_override.empty() ? p.doc_.value("out", "run") : out_override;
    require(!out.empty(), "bad_params", "empty output directory");
    p.out_ = (out.front() == '/') ? out : p.dir_ + "/" + out;
    p.record(manifest_path);
    return p;
  }

  const nlohmann::json& doc() const { return doc_; }
  std::uint64_t seed() const { return seed_; }
  int threads() const { return threads_; }
  const std::string& out_dir() const { return out_; }

  std::string resolve(const std::string& rel) const {
    if (!rel.empty() && rel.front() == '/') return rel;
    return dir_ + "/" + rel;
  }

  /// Resolves and hashes an input path named in the manifest.
  std::string input(const std::string& rel) {
    const std::string path = resolve(rel);
    record(path);
    return path;
  }

  std::string out_path(const std::string& name) const { return out_ + "/" + name; }

  void record(const std::string& path) { hashes_[path] = hash_file(path); }

  /// Writes the resolved manifest; if one already exists in the run
  /// directory it must agree (same command, same input hashes, same seed).
  void finalize(const std::string& command) {
    namespace fs = std::filesystem;
    fs::create_directories(out_);
    nlohmann::json resolved;
    resolved["command"] = command;
    resolved["seed"] = seed_;
    resolved["manifest"] = manifest_path_;
    resolved["inputs"] = nlohmann::json::object();
    for (const auto& [path, hash] : hashes_) resolved["inputs"][path] = hash;
    const std::string target = out_path("manifest.resolved.json");
    if (fs::exists(target)) {
      const auto existing = nlohmann::json::parse(read_file_text(target));
      require(existing == resolved, "hash_mismatch",
              "run directory " + out_ +
                  " was produced from different inputs or settings; runs are append-only");
    } else {
      write_file_text(target, resolved.dump(2) + "\n");
    }
  }

  std::vector<int> months() const {
    require(doc_.contains("months"), "missing_input", "manifest lacks a months list");
    return doc_.at("months").get<std::vector<int>>();
  }

  std::vector<int> annual_months() const {
    if (doc_.contains("annual_months")) {
      const auto m = doc_.at("annual_months").get<std::vector<int>>();
      require(m.size() == 12, "bad_params", "annual_months must list twelve months");
      return m;
    }
    const auto m = months();
    require(m.size() >= 12, "bad_params", "block too short to define a year");
    return {m.end() - 12, m.end()};
  }

 private:
  nlohmann::json doc_;
  std::string manifest_path_, dir_, out_;
  std::uint64_t seed_ = 1;
  int threads_ = 1;
  std::map<std::string, std::string> hashes_;
};

namespace pipeline_detail {

inline std::string month_file(const std::string& pattern, int month) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern.c_str(), month);
  return buf;
}

inline std::string input_str(const nlohmann::json& doc, const char* key) {
  require(doc.contains("inputs") && doc.at("inputs").contains(key), "missing_input",
          std::string("manifest inputs lack '") + key + "'");
  return doc.at("inputs").at(key).get<std::string>();
}

/// Shared loader for the fitting/product pipelines: grid, panel, weights,
/// covariate design and population/theta offsets.
struct FitBundle {
  Raster population;
  FacilityRegistry registry;
  std::vector<Raster> theta;  // per block month
  LgcpData data;              // offsets = population x theta
  Standardizer standardizer;
  std::vector<std::vector<double>> offsets_population;  // prediction mode
};

inline FitBundle load_fit_bundle(Pipeline& p) {
  FitBundle b;
  const auto& doc = p.doc();
  const auto months = p.months();
  b.population = read_ascii_grid(p.input(input_str(doc, "population")));
  b.registry = load_registry_csv(p.input(input_str(doc, "registry")));
  std::vector<std::string> ids;
  for (const auto& f : b.registry.facilities) ids.push_back(f.id);
  b.data.window = b.population.spec;
  b.data.months = months;
  b.data.panel = load_panel_csv(p.input(input_str(doc, "panel")), ids, months);

  const std::string theta_pattern = input_str(doc, "theta_seek");
  const std::string weights_pattern = input_str(doc, "weights");
  for (int m : months) {
    b.theta.push_back(read_ascii_grid(p.input(month_file(theta_pattern, m))));
    require_compatible(b.theta.back().spec, b.population.spec, "theta_seek raster");
    b.data.weights.push_back(
        load_weights_csv(p.input(month_file(weights_pattern, m)),
                         static_cast<int>(b.population.spec.size()),
                         static_cast<int>(ids.size())));
    b.data.weights.back().validate(1e-9);
  }

  CovariatePanel panel = load_covariate_manifest(p.input(input_str(doc, "covariates")));
  panel = gap_fill(panel);
  std::vector<int> first_year;
  for (std::size_t t = 0; t < std::min<std::size_t>(12, months.size()); ++t) {
    first_year.push_back(months[t]);
  }
  const bool standardize = doc.value("standardize", true);
  b.standardizer =
      standardize ? fit_standardizer(panel, first_year)
                  : Standardizer{panel.names, std::vector<double>(panel.names.size(), 0.0),
                                 std::vector<double>(panel.names.size(),
                                                     std::numeric_limits<double>::quiet_NaN())};
  b.data.design = build_design(panel, b.standardizer, months);
  b.data.covariate_names = {"intercept"};
  for (const auto& nm : panel.names) b.data.covariate_names.push_back(nm);

  for (std::size_t t = 0; t < months.size(); ++t) {
    std::vector<double> efit(b.population.size(), 0.0);
    std::vector<double> epop(b.population.size(), 0.0);
    for (std::size_t i = 0; i < b.population.size(); ++i) {
      const double pop = b.population.missing[i] ? 0.0 : b.population.values[i];
      const double th = b.theta[t].missing[i] ? 0.0 : b.theta[t].values[i];
      efit[i] = pop * th;
      epop[i] = pop;
    }
    b.data.offsets.push_back(std::move(efit));
    b.offsets_population.push_back(std::move(epop));
  }
  b.data.validate();
  return b;
}

inline ProductInputs product_inputs(const FitBundle& b) {
  ProductInputs in;
  in.window = b.data.window;
  in.months = b.data.months;
  in.design = b.data.design;
  in.population.assign(b.population.values.begin(), b.population.values.end());
  return in;
}

inline ChainConfig chain_config(const Pipeline& p) {
  ChainConfig cfg;
  cfg.seed = p.seed();
  cfg.threads = p.threads();
  if (p.doc().contains("chain")) {
    const auto& c = p.doc().at("chain");
    cfg.iterations = c.value("iterations", cfg.iterations);
    cfg.burnin = c.value("burnin", cfg.burnin);
    cfg.thin = c.value("thin", cfg.thin);
    cfg.update_hypers = c.value("update_hypers", cfg.update_hypers);
    cfg.augmented = c.value("augmented", cfg.augmented);
    cfg.ext_factor = c.value("ext_factor", cfg.ext_factor);
    cfg.allow_spectrum_clamp = c.value("allow_spectrum_clamp", cfg.allow_spectrum_clamp);
    cfg.record_fields = c.value("record_fields", cfg.record_fields);
    cfg.init_sigma = c.value("init_sigma", cfg.init_sigma);
    cfg.init_phi = c.value("init_phi", cfg.init_phi);
    cfg.init_theta = c.value("init_theta", cfg.init_theta);
    cfg.block_id = c.value("block_id", cfg.block_id);
    if (c.contains("priors")) cfg.priors = HyperPriors::from_json(c.at("priors"));
  }
  return cfg;
}

}  // namespace pipeline_detail

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

/// `simulate`: writes a full synthetic study area in the formats the other
/// commands consume, plus the complete truth for recovery checks.
inline void cmd_simulate(Pipeline& p) {
  namespace fs = std::filesystem;
  const Scenario sc =
      Scenario::from_json(nlohmann::json::parse(read_file_text(
          p.input(p.doc().value("scenario", std::string("scenario.json"))))));
  const SimulationOutput sim = simulate(sc, p.seed());
  fs::create_directories(p.out_dir());
  fs::create_directories(p.out_path("truth"));

  write_ascii_grid(p.out_path("population.asc"), sim.population);
  save_registry_csv(p.out_path("registry.csv"), sim.registry);
  save_panel_csv(p.out_path("panel.csv"), sim.panel);
  save_panel_csv(p.out_path("truth/panel_full.csv"), sim.full_panel);

  nlohmann::json cov_manifest;
  cov_manifest["months"] = sim.covariates.months;
  cov_manifest["covariates"] = nlohmann::json::array();
  for (std::size_t k = 0; k < sim.covariates.n_covariates(); ++k) {
    nlohmann::json files;
    for (std::size_t t = 0; t < sim.covariates.months.size(); ++t) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%d.asc", sim.covariates.names[k].c_str(),
                    sim.covariates.months[t]);
      write_ascii_grid(p.out_path(name), sim.covariates.rasters[k][t]);
      files[std::to_string(sim.covariates.months[t])] = name;
    }
    cov_manifest["covariates"].push_back(
        {{"name", sim.covariates.names[k]}, {"lag", sim.covariates.lags[k]}, {"files", files}});
  }
  write_file_text(p.out_path("covariates.json"), cov_manifest.dump(2) + "\n");

  const auto months = sc.months();
  for (std::size_t t = 0; t < months.size(); ++t) {
    char name[64];
    std::snprintf(name, sizeof name, "theta_seek_%d.asc", months[t]);
    write_ascii_grid(p.out_path(name), sim.theta_seek[t]);
    std::snprintf(name, sizeof name, "weights_%d.csv", months[t]);
    save_weights_csv(p.out_path(name), sim.weights[t]);
    Raster cases(sc.grid);
    for (std::size_t i = 0; i < cases.size(); ++i) cases.values[i] = sim.true_cases[t][i];
    std::snprintf(name, sizeof name, "truth/true_cases_%d.asc", months[t]);
    write_ascii_grid(p.out_path(name), cases);
    Raster field(sc.grid);
    for (std::size_t i = 0; i < field.size(); ++i) field.values[i] = sim.true_y[t][i];
    std::snprintf(name, sizeof name, "truth/true_y_%d.asc", months[t]);
    write_ascii_grid(p.out_path(name), field);
  }

  nlohmann::json truth;
  truth["beta"] = sc.beta;
  truth["sigma"] = sc.sigma;
  truth["phi"] = sc.phi;
  truth["theta_time"] = sc.theta_time;
  truth["covariates"] = sim.design_names;
  nlohmann::json totals = nlohmann::json::array();
  for (int t = 0; t < sc.n_months; ++t) totals.push_back(sim.total_cases(t));
  truth["total_cases_by_month"] = totals;
  write_file_text(p.out_path("truth/truth.json"), truth.dump(2) + "\n");
  write_file_text(p.out_path("scenario.resolved.json"), sc.to_json().dump(2) + "\n");

  // a ready-to-use manifest for the downstream commands
  nlohmann::json run;
  run["months"] = months;
  run["seed"] = p.seed();
  run["inputs"] = {{"population", "population.asc"},
                   {"registry", "registry.csv"},
                   {"panel", "panel.csv"},
                   {"covariates", "covariates.json"},
                   {"theta_seek", "theta_seek_%d.asc"},
                   {"weights", "weights_%d.csv"}};
  run["out"] = "fit";
  write_file_text(p.out_path("manifest.json"), run.dump(2) + "\n");
  p.finalize("simulate");
}

/// `travel-cost`: least-cost minutes to the nearest active facility for
/// each requested month, from a friction configuration (and optional
/// landscape class rasters).
inline void cmd_travel_cost(Pipeline& p) {
  namespace fs = std::filesystem;
  const auto& doc = p.doc();
  const FacilityRegistry registry =
      load_registry_csv(p.input(pipeline_detail::input_str(doc, "registry")));
  FrictionConfig cfg;
  if (doc.at("inputs").contains("friction")) {
    cfg = FrictionConfig::from_json(
        nlohmann::json::parse(read_file_text(p.input(doc.at("inputs").at("friction")))));
  }
  FrictionSurface surface;
  if (doc.at("inputs").contains("landscape")) {
    std::map<std::string, Raster> layers;
    for (auto it = doc.at("inputs").at("landscape").begin();
         it != doc.at("inputs").at("landscape").end(); ++it) {
      layers[it.key()] = read_ascii_grid(p.input(it.value().get<std::string>()));
    }
    surface = build_friction(layers, cfg);
  } else {
    const Raster pop = read_ascii_grid(p.input(pipeline_detail::input_str(doc, "population")));
    surface = FrictionSurface{Raster(pop.spec, cfg.base_minutes_per_km)};
  }
  const EdgeMean mean_kind = doc.value("edge_mean", std::string("arithmetic")) == "harmonic"
                                 ? EdgeMean::harmonic
                                 : EdgeMean::arithmetic;
  const TransitionGraph graph = TransitionGraph::build(surface, mean_kind);
  const bool include_chws = doc.value("include_chws_in_travel", true);
  fs::create_directories(p.out_dir());
  for (int m : p.months()) {
    const Raster r = travel_cost_to_nearest(registry, m, graph, include_chws);
    char name[64];
    std::snprintf(name, sizeof name, "travel_%d.asc", m);
    write_ascii_grid(p.out_path(name), r);
  }
  if (doc.value("per_facility_travel", false)) {
    for (std::size_t j = 0; j < registry.size(); ++j) {
      const Raster r =
          least_cost_distances({registry.cell_of(j, graph.friction.spec)}, graph);
      write_ascii_grid(p.out_path("travel_" + registry.facilities[j].id + ".asc"), r);
    }
  }
  p.finalize("travel-cost");
}

/// `fit-seeking`: fits the treatment-seeking model from the observation CSV
/// and writes the fitted parameters plus per-month probability surfaces
/// when travel rasters are on hand.
inline void cmd_fit_seeking(Pipeline& p) {
  namespace fs = std::filesystem;
  const auto& doc = p.doc();
  require(doc.contains("seeking"), "missing_input", "manifest lacks a seeking section");
  const auto& sk = doc.at("seeking");
  const auto g = sk.at("coarse_grid");
  const GridSpec coarse{g.at(0).get<int>(), g.at(1).get<int>(), g.at(2).get<double>(),
                        g.at(3).get<double>(), g.at(4).get<double>()};
  const int n_months = sk.at("n_months").get<int>();

  std::vector<Raster> travel_by_month;
  const bool have_travel = doc.contains("inputs") && doc.at("inputs").contains("travel");
  if (have_travel) {
    const std::string pattern = doc.at("inputs").at("travel").get<std::string>();
    for (int m = 0; m < n_months; ++m) {
      travel_by_month.push_back(
          read_ascii_grid(p.input(pipeline_detail::month_file(pattern, m))));
    }
  }
  const auto obs = load_seek_observations_csv(
      p.input(pipeline_detail::input_str(doc, "seek_observations")), coarse,
      have_travel ? &travel_by_month : nullptr);

  SeekingFitOptions opts;
  opts.optimize_hypers = sk.value("optimize_hypers", true);
  opts.mcmc = sk.value("mcmc", false);
  opts.seed = p.seed();
  const SeekingFit fit = fit_treatment_seeking(obs, coarse, n_months, opts);

  fs::create_directories(p.out_dir());
  nlohmann::json out = fit.params.to_json();
  out["beta0_ci95"] = fit.beta0_ci95;
  out["beta1_ci95"] = fit.beta1_ci95;
  out["beta0_sd"] = fit.beta0_sd;
  out["beta1_sd"] = fit.beta1_sd;
  write_file_text(p.out_path("seeking_params.json"), out.dump(2) + "\n");

  if (have_travel) {
    for (int m = 0; m < n_months; ++m) {
      const ThetaSurface surf =
          predict_theta_surface(fit.params, travel_by_month[static_cast<std::size_t>(m)], m);
      char name[64];
      std::snprintf(name, sizeof name, "theta_seek_%d.asc", m);
      write_ascii_grid(p.out_path(name), surf.theta);
    }
  }
  p.finalize("fit-seeking");
}

/// `build-weights`: per-facility least-cost rasters, the choice-model
/// weight matrix per month and the CHW adjustment when CHWs are present.
inline void cmd_build_weights(Pipeline& p) {
  namespace fs = std::filesystem;
  const auto& doc = p.doc();
  const FacilityRegistry registry =
      load_registry_csv(p.input(pipeline_detail::input_str(doc, "registry")));
  const Raster population =
      read_ascii_grid(p.input(pipeline_detail::input_str(doc, "population")));
  FrictionConfig fcfg;
  if (doc.at("inputs").contains("friction")) {
    fcfg = FrictionConfig::from_json(
        nlohmann::json::parse(read_file_text(p.input(doc.at("inputs").at("friction")))));
  }
  const TransitionGraph graph =
      TransitionGraph::build(FrictionSurface{Raster(population.spec, fcfg.base_minutes_per_km)});
  std::vector<Raster> travel;
  for (std::size_t j = 0; j < registry.size(); ++j) {
    travel.push_back(least_cost_distances({registry.cell_of(j, population.spec)}, graph));
  }
  ChoiceModelParams params;
  if (doc.contains("choice")) params = ChoiceModelParams::from_json(doc.at("choice"));
  ChwCurve curve;
  if (doc.contains("chw_curve")) {
    curve.intercept = doc.at("chw_curve").at(0).get<double>();
    curve.slope = doc.at("chw_curve").at(1).get<double>();
  }
  WeightBuildOptions opts;
  opts.accessibility_ceiling_minutes = doc.value("accessibility_ceiling", 1505.0);
  bool any_chw = false;
  for (std::size_t j = 0; j < registry.size(); ++j) any_chw |= registry.is_chw(j);

  fs::create_directories(p.out_dir());
  nlohmann::json report;
  for (int m : p.months()) {
    WeightMatrix w = build_weight_matrix(registry, params, travel, population, m, opts);
    if (any_chw) w = chw_adjust(w, registry, travel, m, curve);
    w.validate(1e-9);
    char name[64];
    std::snprintf(name, sizeof name, "weights_%d.csv", m);
    save_weights_csv(p.out_path(name), w);
    report[std::to_string(m)] = {{"no_access_fallbacks", opts.no_access_fallbacks},
                                 {"unreachable_cells", opts.unreachable_cells}};
  }
  write_file_text(p.out_path("weights_report.json"), report.dump(2) + "\n");
  p.finalize("build-weights");
}

/// `fit`: the ALGCP chain on one block, writing retained samples, the trace
/// and diagnostics under <out>/samples.
inline void cmd_fit(Pipeline& p) {
  auto bundle = pipeline_detail::load_fit_bundle(p);
  ChainConfig cfg = pipeline_detail::chain_config(p);
  const std::string samples_dir = p.out_path("samples");
  // resuming into an existing run: the data must hash identically
  if (std::filesystem::exists(samples_dir + "/index.json")) {
    const auto existing = PosteriorSamples::load(samples_dir);
    require(existing.data_hash == detail::hash_lgcp_data(bundle.data), "hash_mismatch",
            "existing samples in " + samples_dir + " came from different data");
  }
  const PosteriorSamples samples = run_chain(bundle.data, cfg);
  samples.save(samples_dir);
  nlohmann::json design_info;
  design_info["standardizer"] = {{"names", bundle.standardizer.names},
                                 {"means", bundle.standardizer.means},
                                 {"sds", [&] {
                                    std::vector<double> s;
                                    for (double v : bundle.standardizer.sds) {
                                      s.push_back(std::isfinite(v) ? v : -1.0);
                                    }
                                    return s;
                                  }()}};
  write_file_text(p.out_path("design_info.json"), design_info.dump(2) + "\n");
  p.finalize("fit");
}

namespace pipeline_detail {

/// Product commands reload the fit bundle and the retained samples.
struct LoadedFit {
  FitBundle bundle;
  PosteriorSamples samples;
  ProductInputs inputs;
};

inline LoadedFit load_fit_outputs(Pipeline& p) {
  LoadedFit lf{load_fit_bundle(p), {}, {}};
  const std::string fit_dir =
      p.doc().contains("fit") ? p.resolve(p.doc().at("fit").get<std::string>())
                              : p.out_path("samples");
  lf.samples = PosteriorSamples::load(fit_dir.ends_with("samples") ? fit_dir
                                                                   : fit_dir + "/samples");
  require(lf.samples.data_hash == detail::hash_lgcp_data(lf.bundle.data), "hash_mismatch",
          "samples were fitted to different data than this manifest describes");
  lf.inputs = product_inputs(lf.bundle);
  return lf;
}

}  // namespace pipeline_detail

/// `predict`: posterior-mean incidence surfaces (cases per 1000 per month),
/// prediction-mode (population offsets only), optional PNG maps.
inline void cmd_predict(Pipeline& p) {
  auto lf = pipeline_detail::load_fit_outputs(p);
  const bool png = p.doc().value("png", false);
  for (int m : p.months()) {
    const Raster r = incidence_surface_mean(lf.samples, lf.inputs, m);
    char name[64];
    std::snprintf(name, sizeof name, "incidence_%d.asc", m);
    write_ascii_grid(p.out_path(name), r);
    if (png) {
      std::snprintf(name, sizeof name, "incidence_%d.png", m);
      double hi = 0.0;
      for (double v : r.values) hi = std::max(hi, v);
      render_binned_png(p.out_path(name), r, 0.0, hi > 0 ? hi : 1.0);
    }
  }
  p.finalize("predict");
}

/// `exceedance`: P(incidence > threshold) maps, monthly per block month or
/// yearly over the block's twelve calendar months.
inline void cmd_exceedance(Pipeline& p) {
  auto lf = pipeline_detail::load_fit_outputs(p);
  double threshold = 100.0;
  std::string period = "monthly";
  if (p.doc().contains("exceedance")) {
    threshold = p.doc().at("exceedance").value("threshold", 100.0);
    period = p.doc().at("exceedance").value("period", std::string("monthly"));
  }
  const bool png = p.doc().value("png", false);
  if (period == "yearly") {
    const Raster r = exceedance(lf.samples, lf.inputs, threshold, ExceedancePeriod::yearly,
                                p.annual_months());
    write_ascii_grid(p.out_path("exceedance_annual.asc"), r);
    if (png) render_binned_png(p.out_path("exceedance_annual.png"), r);
  } else {
    for (int m : p.months()) {
      const Raster r =
          exceedance(lf.samples, lf.inputs, threshold, ExceedancePeriod::monthly, {m});
      char name[64];
      std::snprintf(name, sizeof name, "exceedance_%d.asc", m);
      write_ascii_grid(p.out_path(name), r);
      if (png) {
        std::snprintf(name, sizeof name, "exceedance_%d.png", m);
        render_binned_png(p.out_path(name), r);
      }
    }
  }
  p.finalize("exceedance");
}

/// `validate`: per-facility d statistics with validation-mode offsets
/// (population x treatment seeking).
inline void cmd_validate(Pipeline& p) {
  auto lf = pipeline_detail::load_fit_outputs(p);
  const auto rows = validation_d(lf.bundle.data.panel, lf.samples, lf.inputs,
                                 lf.bundle.data.weights, lf.bundle.data.offsets,
                                 lf.bundle.registry);
  save_validation_csv(p.out_path("validation.csv"), rows);
  double dbar = 0.0;
  for (const auto& r : rows) dbar += r.d;
  if (!rows.empty()) dbar /= static_cast<double>(rows.size());
  nlohmann::json summary{{"facilities", rows.size()}, {"mean_d", dbar}};
  write_file_text(p.out_path("validation_summary.json"), summary.dump(2) + "\n");
  p.finalize("validate");
}

/// `merge`: concatenates retained draws across block fits and writes the
/// combined rate-ratio summary table.
inline void cmd_merge(Pipeline& p) {
  require(p.doc().contains("blocks"), "missing_input", "manifest lacks a blocks list");
  std::vector<PosteriorSamples> blocks;
  for (const auto& b : p.doc().at("blocks")) {
    std::string dir = p.resolve(b.get<std::string>());
    if (!std::filesystem::exists(dir + "/index.json")) dir += "/samples";
    blocks.push_back(PosteriorSamples::load(dir));
  }
  const PosteriorSamples merged = merge_posteriors(blocks);
  std::filesystem::create_directories(p.out_dir());
  merged.save(p.out_path("merged"));
  save_parameter_summary_csv(p.out_path("combined_estimates.csv"),
                             summarize_parameters(merged));
  p.finalize("merge");
}

/// `report`: the block's parameter summary table, the annual burden with
/// credible interval, and a truth-coverage table when a simulation truth
/// file is provided.
inline void cmd_report(Pipeline& p) {
  auto lf = pipeline_detail::load_fit_outputs(p);
  std::filesystem::create_directories(p.out_dir());
  save_parameter_summary_csv(p.out_path("parameter_estimates.csv"),
                             summarize_parameters(lf.samples));

  std::vector<std::vector<double>> pred_offsets;
  for (std::size_t t = 0; t < lf.inputs.months.size(); ++t) {
    pred_offsets.push_back(lf.bundle.offsets_population[t]);
  }
  const BurdenEstimate burden =
      burden_estimate(lf.samples, lf.inputs, pred_offsets, p.annual_months());
  const BurdenEstimate reported =
      burden_estimate(lf.samples, lf.inputs, lf.bundle.data.offsets, p.annual_months());
  std::ostringstream btab;
  btab << "quantity,mean,lo95,hi95\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "predicted_cases,%.10g,%.10g,%.10g\n", burden.mean,
                burden.lo95, burden.hi95);
  btab << buf;
  std::snprintf(buf, sizeof buf, "expected_reported_cases,%.10g,%.10g,%.10g\n", reported.mean,
                reported.lo95, reported.hi95);
  btab << buf;
  write_file_text(p.out_path("annual_burden.csv"), btab.str());

  if (p.doc().contains("truth")) {
    const auto truth =
        nlohmann::json::parse(read_file_text(p.input(p.doc().at("truth").get<std::string>())));
    RecoveryReport rep;
    const auto beta_truth = truth.at("beta").get<std::vector<double>>();
    for (std::size_t k = 0; k < lf.samples.covariate_names.size(); ++k) {
      std::vector<double> draws;
      for (const auto& b : lf.samples.beta) draws.push_back(b[k]);
      rep.rows.push_back(detail::recovery_row("beta_" + lf.samples.covariate_names[k],
                                              beta_truth.at(k), draws));
    }
    rep.rows.push_back(
        detail::recovery_row("sigma", truth.at("sigma").get<double>(), lf.samples.sigma));
    rep.rows.push_back(
        detail::recovery_row("phi", truth.at("phi").get<double>(), lf.samples.phi));
    rep.rows.push_back(detail::recovery_row("theta_time", truth.at("theta_time").get<double>(),
                                            lf.samples.theta));
    save_recovery_csv(p.out_path("recovery.csv"), rep);
  }
  p.finalize("report");
}

}  // namespace algcp
