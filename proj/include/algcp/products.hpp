#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "algcp/chain.hpp"
#include "algcp/facility.hpp"
#include "algcp/grid.hpp"

namespace algcp {

/// Shared inputs for the posterior map products: grid, month list, design
/// values and population, aligned with the retained samples.
struct ProductInputs {
  GridSpec window;
  std::vector<int> months;
  std::vector<std::vector<std::vector<double>>> design;  // [k][t][i]
  std::vector<double> population;                        // per cell

  std::size_t n_cells() const { return window.size(); }
  std::size_t month_pos(int global_month) const {
    for (std::size_t t = 0; t < months.size(); ++t) {
      if (months[t] == global_month) return t;
    }
    fail("missing_month", "month " + std::to_string(global_month) + " not in this block");
  }
};

namespace detail {

/// exp(Z beta + Y) for one retained draw and one month position.
inline void draw_rate(const ProductInputs& in, const std::vector<double>& beta,
                      const std::vector<double>& field, std::size_t t, std::vector<double>& rate) {
  const std::size_t n = in.n_cells();
  rate.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double eta = field[t * n + i];
    for (std::size_t k = 0; k < beta.size(); ++k) eta += beta[k] * in.design[k][t][i];
    rate[i] = std::exp(eta);
  }
}

}  // namespace detail

/**
 * Incidence surface for one retained draw: cases per 1000 people per month,
 * i.e. 1000 * exp(Z beta + Y). Prediction-mode rates never include the
 * treatment-seeking probability - they estimate all cases, reported or not.
 */
inline Raster incidence_surface(const SampleView& sample, const ProductInputs& in,
                                int global_month) {
  const std::size_t t = in.month_pos(global_month);
  std::vector<double> rate;
  detail::draw_rate(in, sample.beta, sample.field_window, t, rate);
  Raster out(in.window);
  for (std::size_t i = 0; i < rate.size(); ++i) out.values[i] = 1000.0 * rate[i];
  return out;
}

/// Posterior-mean incidence surface over all retained draws.
inline Raster incidence_surface_mean(const PosteriorSamples& samples, const ProductInputs& in,
                                     int global_month) {
  require(!samples.fields.empty(), "bad_params", "samples carry no fields");
  const std::size_t t = in.month_pos(global_month);
  Raster out(in.window);
  std::vector<double> rate;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    detail::draw_rate(in, samples.beta[s], samples.fields[s], t, rate);
    for (std::size_t i = 0; i < rate.size(); ++i) {
      out.values[i] += 1000.0 * rate[i] / static_cast<double>(samples.size());
    }
  }
  return out;
}

enum class ExceedancePeriod { monthly, yearly };

/**
 * Exceedance probability map: the fraction of retained draws whose rate
 * exceeds the threshold, cellwise. Monthly mode compares each month's rate
 * against `threshold_per_1000`; yearly mode sums the rates over the given
 * twelve months (the annual threshold for 100/month is 1200 = 12 x 100).
 */
inline Raster exceedance(const PosteriorSamples& samples, const ProductInputs& in,
                         double threshold_per_1000, ExceedancePeriod period,
                         const std::vector<int>& period_months) {
  require(!samples.fields.empty(), "bad_params", "samples carry no fields");
  require(!period_months.empty(), "bad_params", "no months selected");
  if (period == ExceedancePeriod::yearly) {
    require(period_months.size() == 12, "bad_params", "a year is twelve months");
  }
  const std::size_t n = in.n_cells();
  Raster out(in.window);
  std::vector<double> rate, annual(n);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    std::fill(annual.begin(), annual.end(), 0.0);
    for (int m : period_months) {
      detail::draw_rate(in, samples.beta[s], samples.fields[s], in.month_pos(m), rate);
      for (std::size_t i = 0; i < n; ++i) annual[i] += 1000.0 * rate[i];
    }
    if (period == ExceedancePeriod::monthly) {
      require(period_months.size() == 1, "bad_params", "monthly exceedance takes one month");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (annual[i] > threshold_per_1000) out.values[i] += 1.0;
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.values[i] /= static_cast<double>(samples.size());
  return out;
}

/// Exceedance of a plain sample vector against a threshold (the counting
/// primitive behind the maps, exposed for direct checks).
inline double exceedance_fraction(const std::vector<double>& draws, double threshold) {
  require(!draws.empty(), "bad_params", "no draws");
  double count = 0.0;
  for (double v : draws) {
    if (v > threshold) count += 1.0;
  }
  return count / static_cast<double>(draws.size());
}

/// Signed root-chi-square residual d = (O - E) / sqrt(E).
inline double d_statistic(double observed, double expected) {
  require(expected > 0.0, "bad_value", "expected count must be positive");
  return (observed - expected) / std::sqrt(expected);
}

struct FacilityValidation {
  std::string id;
  double lon = 0.0, lat = 0.0;
  double observed = 0.0;
  double expected = 0.0;  // posterior mean through W with population x theta offsets
  double d = 0.0;
};

/**
 * Per-facility goodness of fit over the reporting months: the observed
 * count against the posterior-mean predicted count through the weight
 * matrix, with validation-mode offsets (population x treatment seeking).
 */
inline std::vector<FacilityValidation> validation_d(
    const ObservationPanel& panel, const PosteriorSamples& samples, const ProductInputs& in,
    const std::vector<WeightMatrix>& weights,
    const std::vector<std::vector<double>>& offsets_fit, const FacilityRegistry& registry) {
  require(!samples.fields.empty(), "bad_params", "samples carry no fields");
  const std::size_t n = in.n_cells();
  const std::size_t T = in.months.size();
  const std::size_t m = panel.n_facilities();
  std::vector<double> expected(m * T, 0.0);
  std::vector<double> rate;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      detail::draw_rate(in, samples.beta[s], samples.fields[s], t, rate);
      const WeightMatrix& w = weights[t];
      for (std::size_t i = 0; i < n; ++i) {
        const double lambda = offsets_fit[t][i] * rate[i];
        if (lambda == 0.0) continue;
        for (const auto& [j, wij] : w.rows[i]) {
          expected[static_cast<std::size_t>(j) * T + t] +=
              wij * lambda / static_cast<double>(samples.size());
        }
      }
    }
  }
  std::vector<FacilityValidation> out;
  for (std::size_t j = 0; j < m; ++j) {
    FacilityValidation v;
    v.id = panel.facility_ids[j];
    v.lon = registry.facilities[j].lon;
    v.lat = registry.facilities[j].lat;
    bool any = false;
    for (std::size_t t = 0; t < T; ++t) {
      if (panel.is_missing(j, t)) continue;
      any = true;
      v.observed += panel.y(j, t);
      v.expected += expected[j * T + t];
    }
    if (!any || v.expected <= 0.0) continue;
    v.d = d_statistic(v.observed, v.expected);
    out.push_back(v);
  }
  return out;
}

inline void save_validation_csv(const std::string& path,
                                const std::vector<FacilityValidation>& rows) {
  std::ostringstream out;
  out << "facility_id,lon,lat,observed,expected,d\n";
  char buf[40];
  for (const auto& r : rows) {
    out << r.id;
    for (double v : {r.lon, r.lat, r.observed, r.expected, r.d}) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  write_file_text(path, out.str());
}

struct BurdenEstimate {
  double mean = 0.0;
  double lo95 = 0.0, hi95 = 0.0;
  std::vector<double> per_draw;  // total expected cases per retained draw
};

/**
 * Posterior distribution of the total expected case count over the given
 * months. Prediction mode passes population offsets; validation mode passes
 * population x theta_seek, which is dominated cellwise, so prediction-mode
 * totals are at least validation-mode totals on every draw.
 */
inline BurdenEstimate burden_estimate(const PosteriorSamples& samples, const ProductInputs& in,
                                      const std::vector<std::vector<double>>& offsets,
                                      const std::vector<int>& period_months) {
  require(!samples.fields.empty(), "bad_params", "samples carry no fields");
  BurdenEstimate est;
  const std::size_t n = in.n_cells();
  std::vector<double> rate;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    std::vector<double> month_totals;
    for (int m : period_months) {
      const std::size_t t = in.month_pos(m);
      detail::draw_rate(in, samples.beta[s], samples.fields[s], t, rate);
      std::vector<double> cell(n);
      for (std::size_t i = 0; i < n; ++i) cell[i] = offsets[t][i] * rate[i];
      month_totals.push_back(pairwise_sum(cell));
    }
    est.per_draw.push_back(pairwise_sum(month_totals));
  }
  std::vector<double> sorted = est.per_draw;
  std::sort(sorted.begin(), sorted.end());
  double s = 0.0;
  for (double v : sorted) s += v;
  est.mean = s / static_cast<double>(sorted.size());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return (1 - frac) * sorted[lo] + frac * sorted[std::min(lo + 1, sorted.size() - 1)];
  };
  est.lo95 = q(0.025);
  est.hi95 = q(0.975);
  return est;
}

// ---------------------------------------------------------------------------
// Cross-block merging and the parameter summary table
// ---------------------------------------------------------------------------

struct ParameterSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, lo95 = 0.0, hi95 = 0.0;
  bool rate_ratio = false;  // covariate effects are reported as exp(beta)
};

/// Concatenates retained draws of the shared parameters across blocks
/// (per-block latent fields are never merged).
inline PosteriorSamples merge_posteriors(const std::vector<PosteriorSamples>& blocks) {
  require(!blocks.empty(), "bad_params", "nothing to merge");
  PosteriorSamples merged;
  merged.window = blocks[0].window;
  merged.covariate_names = blocks[0].covariate_names;
  merged.block_id = "merged";
  for (const auto& b : blocks) {
    require(b.covariate_names == merged.covariate_names, "bad_params",
            "blocks disagree on covariates; cannot merge");
    merged.beta.insert(merged.beta.end(), b.beta.begin(), b.beta.end());
    merged.sigma.insert(merged.sigma.end(), b.sigma.begin(), b.sigma.end());
    merged.phi.insert(merged.phi.end(), b.phi.begin(), b.phi.end());
    merged.theta.insert(merged.theta.end(), b.theta.begin(), b.theta.end());
    merged.logpost.insert(merged.logpost.end(), b.logpost.begin(), b.logpost.end());
    if (!merged.block_id.empty()) merged.block_id += "+";
    merged.block_id += b.block_id;
  }
  return merged;
}

namespace detail {

inline ParameterSummary summarize(const std::string& name, std::vector<double> draws,
                                  bool rate_ratio) {
  ParameterSummary s;
  s.name = name;
  s.rate_ratio = rate_ratio;
  if (rate_ratio) {
    for (double& v : draws) v = std::exp(v);
  }
  double mean = 0.0;
  for (double v : draws) mean += v;
  mean /= static_cast<double>(draws.size());
  double var = 0.0;
  for (double v : draws) var += (v - mean) * (v - mean);
  var /= static_cast<double>(draws.size() > 1 ? draws.size() - 1 : 1);
  s.mean = mean;
  s.sd = std::sqrt(var);
  std::sort(draws.begin(), draws.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(draws.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return (1 - frac) * draws[lo] + frac * draws[std::min(lo + 1, draws.size() - 1)];
  };
  s.lo95 = q(0.025);
  s.hi95 = q(0.975);
  return s;
}

}  // namespace detail

/// Rate-ratio style summary rows: covariate effects exponentiated, the
/// three covariance parameters on their natural scale.
inline std::vector<ParameterSummary> summarize_parameters(const PosteriorSamples& samples) {
  require(samples.size() > 0, "bad_params", "no draws to summarize");
  std::vector<ParameterSummary> out;
  for (std::size_t k = 0; k < samples.covariate_names.size(); ++k) {
    std::vector<double> draws;
    for (const auto& b : samples.beta) draws.push_back(b[k]);
    out.push_back(detail::summarize(samples.covariate_names[k], draws, /*rate_ratio=*/true));
  }
  out.push_back(detail::summarize("sigma", samples.sigma, false));
  out.push_back(detail::summarize("phi", samples.phi, false));
  out.push_back(detail::summarize("theta", samples.theta, false));
  return out;
}

inline void save_parameter_summary_csv(const std::string& path,
                                       const std::vector<ParameterSummary>& rows) {
  std::ostringstream out;
  out << "parameter,scale,mean,sd,lo95,hi95\n";
  char buf[40];
  for (const auto& r : rows) {
    out << r.name << ',' << (r.rate_ratio ? "rate_ratio" : "natural");
    for (double v : {r.mean, r.sd, r.lo95, r.hi95}) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  write_file_text(path, out.str());
}

}  // namespace algcp
