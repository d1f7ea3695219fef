#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "algcp/facility.hpp"
#include "algcp/grid.hpp"
#include "algcp/rng.hpp"
#include "algcp/weights.hpp"

namespace algcp {

/**
 * Multiplicative competitive interaction (Huff-style) facility choice.
 * The utility of facility j for an individual in cell i is
 *
 *   u_ij = exp(tau_type(j)) * B1_ij^beta1 * (B2_ij + 1)^beta2
 *
 * with B1 the travel time in minutes (floored at 1) and B2 the number of
 * strictly closer facilities; B2 enters as B2+1 so a facility with no
 * closer competitor is well defined. Choice probabilities are u_ij
 * normalized over the accessible set.
 *
 * With the default parameters a health post and a health center with
 * identical attributes split roughly 86/14 in favour of the post
 * (e^0.81 / (e^0.81 + e^-1.02)); treat published illustrative splits with
 * care and calibrate tau to your own survey when one is available.
 */
struct ChoiceModelParams {
  std::map<FacilityType, double> tau = {
      {FacilityType::hospital, 0.0},  // reference level
      {FacilityType::health_center, -1.02},
      {FacilityType::health_post, 0.81},
  };
  double beta1 = -1.99;  // travel-time exponent
  double beta2 = -0.60;  // closer-competitor exponent

  double tau_of(FacilityType t) const {
    const auto it = tau.find(t);
    require(it != tau.end(), "unknown_class",
            "no tau parameter for facility type " + to_string(t));
    return it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json jt;
    for (const auto& [t, v] : tau) jt[to_string(t)] = v;
    return {{"tau", jt}, {"beta1", beta1}, {"beta2", beta2}};
  }
  static ChoiceModelParams from_json(const nlohmann::json& j) {
    ChoiceModelParams p;
    if (j.contains("tau")) {
      p.tau.clear();
      for (auto it = j.at("tau").begin(); it != j.at("tau").end(); ++it) {
        p.tau[facility_type_from(it.key())] = it.value().get<double>();
      }
    }
    p.beta1 = j.value("beta1", p.beta1);
    p.beta2 = j.value("beta2", p.beta2);
    return p;
  }
};

/// One row of the choice problem: a facility with its two attributes.
struct FacilityAttributes {
  std::size_t facility;   // registry index
  FacilityType type;
  double travel_minutes;  // B1, floored at 1 minute
  int closer_count;       // B2, strict inequality
};

/**
 * Computes (B1, B2) for one cell over the given facility set. B2 counts
 * facilities with STRICTLY lower cost; equal costs do not count as closer.
 * Facilities whose travel raster is missing at the cell are unreachable and
 * excluded.
 */
inline std::vector<FacilityAttributes> compute_attributes(
    std::size_t cell, const FacilityRegistry& registry,
    const std::vector<std::size_t>& facility_set,
    const std::vector<Raster>& travel_by_facility) {
  std::vector<FacilityAttributes> out;
  std::vector<double> costs;
  for (std::size_t j : facility_set) {
    const Raster& r = travel_by_facility[j];
    if (r.missing[cell]) continue;
    out.push_back({j, registry.facilities[j].type, std::max(1.0, r.values[cell]),
                   0});
    costs.push_back(r.values[cell]);
  }
  for (std::size_t a = 0; a < out.size(); ++a) {
    int closer = 0;
    for (std::size_t b = 0; b < out.size(); ++b) {
      if (b != a && costs[b] < costs[a]) ++closer;
    }
    out[a].closer_count = closer;
  }
  return out;
}

/// Normalized choice probabilities over the attribute list, in list order.
inline std::vector<double> choice_probs(const std::vector<FacilityAttributes>& attrs,
                                        const ChoiceModelParams& params) {
  require(!attrs.empty(), "bad_params", "choice set is empty");
  std::vector<double> u(attrs.size());
  double total = 0.0;
  for (std::size_t k = 0; k < attrs.size(); ++k) {
    u[k] = std::exp(params.tau_of(attrs[k].type)) *
           std::pow(attrs[k].travel_minutes, params.beta1) *
           std::pow(static_cast<double>(attrs[k].closer_count) + 1.0, params.beta2);
    total += u[k];
  }
  require(total > 0.0 && std::isfinite(total), "zero_mass",
          "all choice utilities vanished or overflowed");
  for (double& v : u) v /= total;
  return u;
}

// ---------------------------------------------------------------------------
// Pseudo-observation generation for calibrating the choice model from a
// survey that records only one visit per patient.
// ---------------------------------------------------------------------------

/// Visit frequency shares by facility type and travel-time bracket. Bracket
/// k covers (edges[k-1], edges[k]] minutes with edges[-1] = 0; costs beyond
/// the last edge are treated as inaccessible.
struct FrequencyTable {
  std::vector<double> edges;
  std::map<FacilityType, std::vector<double>> freq;

  /// Default calibration shipped with the toolkit (health centers and
  /// posts over ten brackets up to 1505 minutes).
  static FrequencyTable defaults() {
    FrequencyTable t;
    t.edges = {7, 18, 27, 43, 66, 113, 159, 280, 508, 1505};
    t.freq[FacilityType::health_center] = {0.2001, 0.1057, 0.1098, 0.0484, 0.0376,
                                           0.0193, 0.0155, 0.0033, 0.0011, 0.0006};
    t.freq[FacilityType::health_post] = {0.0,    0.0687, 0.0916, 0.0802, 0.0916,
                                         0.0458, 0.0544, 0.0237, 0.0025, 0.00005};
    return t;
  }

  /// Bracket index for a travel time, or -1 when beyond the last edge.
  int bracket(double minutes) const {
    for (std::size_t k = 0; k < edges.size(); ++k) {
      if (minutes <= edges[k]) return static_cast<int>(k);
    }
    return -1;
  }

  double share(FacilityType type, int b) const {
    const auto it = freq.find(type);
    if (it == freq.end() || b < 0) return 0.0;
    return it->second[static_cast<std::size_t>(b)];
  }
};

struct SurveyVisit {
  double lon = 0.0, lat = 0.0;
  std::size_t facility = 0;  // registry index of the visited facility
};

/// One patient's pseudo-observed visit shares across their accessible set.
struct PseudoPatient {
  std::size_t cell = 0;
  std::size_t visited = 0;
  std::vector<FacilityAttributes> attrs;
  std::vector<double> shares;  // same order as attrs, sums to 1
};

/**
 * The frequency-allocation procedure: per patient, compute travel times to
 * every facility, place each accessible facility in its (type, bracket)
 * quadrant, assign the quadrant share, split evenly when a quadrant holds
 * several facilities, and rescale the patient's shares to sum to one.
 * Patients with no accessible facility are excluded (and counted).
 */
inline std::vector<PseudoPatient> generate_pseudo_observations(
    const std::vector<SurveyVisit>& survey, const FacilityRegistry& registry,
    const std::vector<std::size_t>& facility_set,
    const std::vector<Raster>& travel_by_facility, const FrequencyTable& table,
    long* excluded_count = nullptr) {
  require(!travel_by_facility.empty(), "missing_input", "no travel rasters supplied");
  const GridSpec& spec = travel_by_facility[facility_set.empty() ? 0 : facility_set[0]].spec;
  std::vector<PseudoPatient> out;
  long excluded = 0;
  for (const SurveyVisit& visit : survey) {
    PseudoPatient p;
    p.cell = spec.cell_of_point(visit.lon, visit.lat, "survey household");
    p.visited = visit.facility;
    const auto attrs = compute_attributes(p.cell, registry, facility_set, travel_by_facility);
    // quadrant allocation
    std::map<std::pair<int, int>, int> quadrant_count;  // (type, bracket) -> members
    std::vector<int> brackets(attrs.size());
    for (std::size_t k = 0; k < attrs.size(); ++k) {
      brackets[k] = table.bracket(attrs[k].travel_minutes);
      if (brackets[k] >= 0) {
        quadrant_count[{static_cast<int>(attrs[k].type), brackets[k]}] += 1;
      }
    }
    double total = 0.0;
    for (std::size_t k = 0; k < attrs.size(); ++k) {
      double share = table.share(attrs[k].type, brackets[k]);
      if (share > 0.0) {
        share /= quadrant_count[{static_cast<int>(attrs[k].type), brackets[k]}];
        p.attrs.push_back(attrs[k]);
        p.shares.push_back(share);
        total += share;
      }
    }
    if (p.attrs.empty() || total <= 0.0) {
      ++excluded;
      continue;
    }
    for (double& s : p.shares) s /= total;
    out.push_back(std::move(p));
  }
  if (excluded_count) *excluded_count = excluded;
  return out;
}

/// Decile-based estimation of the frequency table from the survey itself:
/// bracket edges are deciles of the travel times to the visited facilities,
/// and quadrant shares are visit counts scaled by how many facilities were
/// available in that quadrant, renormalized to sum to one.
inline FrequencyTable estimate_frequency_table(
    const std::vector<SurveyVisit>& survey, const FacilityRegistry& registry,
    const std::vector<std::size_t>& facility_set,
    const std::vector<Raster>& travel_by_facility) {
  require(survey.size() >= 10, "bad_params", "too few visits to estimate deciles");
  const GridSpec& spec = travel_by_facility[facility_set[0]].spec;
  std::vector<double> visited_times;
  for (const auto& v : survey) {
    const std::size_t cell = spec.cell_of_point(v.lon, v.lat, "survey household");
    if (!travel_by_facility[v.facility].missing[cell]) {
      visited_times.push_back(std::max(1.0, travel_by_facility[v.facility].values[cell]));
    }
  }
  std::sort(visited_times.begin(), visited_times.end());
  FrequencyTable t;
  for (int k = 1; k <= 10; ++k) {
    const std::size_t idx = std::min(visited_times.size() - 1,
                                     visited_times.size() * static_cast<std::size_t>(k) / 10);
    t.edges.push_back(visited_times[k == 10 ? visited_times.size() - 1 : idx]);
  }
  std::map<FacilityType, std::vector<double>> visits, avail;
  for (const auto& v : survey) {
    const std::size_t cell = spec.cell_of_point(v.lon, v.lat, "survey household");
    const auto attrs = compute_attributes(cell, registry, facility_set, travel_by_facility);
    for (const auto& a : attrs) {
      const int b = t.bracket(a.travel_minutes);
      if (b < 0) continue;
      avail.try_emplace(a.type, std::vector<double>(10, 0.0));
      visits.try_emplace(a.type, std::vector<double>(10, 0.0));
      avail[a.type][static_cast<std::size_t>(b)] += 1.0;
      if (a.facility == v.facility) visits[a.type][static_cast<std::size_t>(b)] += 1.0;
    }
  }
  double total = 0.0;
  for (auto& [type, vcounts] : visits) {
    std::vector<double> shares(10, 0.0);
    for (std::size_t b = 0; b < 10; ++b) {
      if (avail[type][b] > 0.0) shares[b] = vcounts[b] / avail[type][b];
      total += shares[b];
    }
    t.freq[type] = shares;
  }
  require(total > 0.0, "bad_params", "no visits landed in any quadrant");
  for (auto& [type, shares] : t.freq) {
    for (double& s : shares) s /= total;
  }
  return t;
}

// ---------------------------------------------------------------------------
// MCI regression
// ---------------------------------------------------------------------------

struct MciFit {
  ChoiceModelParams params;
  double top1_match_rate = 0.0;  // on the held-out validation split
  std::size_t n_train = 0, n_test = 0;
  double mean_choice_set_size = 0.0;
};

/**
 * Log-centered OLS calibration of the choice model. For every patient i and
 * alternative j with positive share,
 *
 *   log(q_ij / geomean(q_i.)) = sum_k tau_k (I_jk - mean_i I_k)
 *                             + beta1 (log B1_ij - mean_i log B1)
 *                             + beta2 (log(B2_ij+1) - mean_i log(B2+1))
 *
 * Hospitals are the tau reference level (0). Centering within the choice
 * set makes the regression exact for data generated by the model, so a
 * noiseless simulate-and-refit recovers parameters to machine precision.
 * Fit uses an 80/20 patient split; the report carries the held-out top-1
 * match rate. A rank-deficient design is an error naming the columns.
 */
inline MciFit fit_mci(const std::vector<PseudoPatient>& pseudo, double train_fraction = 0.8,
                      std::uint64_t seed = 1) {
  require(!pseudo.empty(), "bad_params", "no pseudo-observations to fit");
  std::vector<std::size_t> order(pseudo.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::stream(seed, 0x6d6369ull);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.next_u64() % i]);
  }
  const std::size_t n_train =
      std::max<std::size_t>(1, static_cast<std::size_t>(train_fraction *
                                                        static_cast<double>(order.size())));

  // Only tau contrasts are identified (softmax shift invariance), so one
  // present type serves as the reference: hospitals when the survey has
  // any, otherwise the most senior type present.
  std::array<bool, 4> type_present{};
  for (std::size_t idx = 0; idx < n_train; ++idx) {
    for (const auto& a : pseudo[order[idx]].attrs) {
      type_present[static_cast<std::size_t>(a.type)] = true;
    }
  }
  const std::array<FacilityType, 4> seniority{FacilityType::hospital,
                                              FacilityType::health_center,
                                              FacilityType::health_post, FacilityType::chw};
  FacilityType reference = FacilityType::hospital;
  for (FacilityType t : seniority) {
    if (type_present[static_cast<std::size_t>(t)]) {
      reference = t;
      break;
    }
  }
  std::array<int, 4> type_col{-1, -1, -1, -1};
  std::vector<std::string> col_names;
  std::vector<FacilityType> col_types;
  for (FacilityType t : seniority) {
    if (t == reference || !type_present[static_cast<std::size_t>(t)]) continue;
    type_col[static_cast<std::size_t>(t)] = static_cast<int>(col_names.size());
    col_names.push_back("tau_" + to_string(t));
    col_types.push_back(t);
  }
  const std::size_t n_type_cols = col_names.size();
  col_names.push_back("log_travel_time");
  col_names.push_back("log_closer_plus_1");
  const std::size_t ncol = col_names.size();

  std::vector<std::vector<double>> xrows;
  std::vector<double> yrows;
  std::vector<bool> col_used(ncol, false);
  for (std::size_t idx = 0; idx < n_train; ++idx) {
    const PseudoPatient& p = pseudo[order[idx]];
    std::vector<std::size_t> pos;
    for (std::size_t k = 0; k < p.shares.size(); ++k) {
      if (p.shares[k] > 0.0) pos.push_back(k);
    }
    if (pos.size() < 2) continue;
    const double inv = 1.0 / static_cast<double>(pos.size());
    double mean_logq = 0.0, mean_logb1 = 0.0, mean_logb2 = 0.0;
    std::vector<double> mean_type(n_type_cols, 0.0);
    for (std::size_t k : pos) {
      mean_logq += std::log(p.shares[k]) * inv;
      mean_logb1 += std::log(p.attrs[k].travel_minutes) * inv;
      mean_logb2 += std::log(p.attrs[k].closer_count + 1.0) * inv;
      const int c = type_col[static_cast<std::size_t>(p.attrs[k].type)];
      if (c >= 0) mean_type[static_cast<std::size_t>(c)] += inv;
    }
    for (std::size_t k : pos) {
      std::vector<double> row(ncol, 0.0);
      const int c = type_col[static_cast<std::size_t>(p.attrs[k].type)];
      for (std::size_t tc = 0; tc < n_type_cols; ++tc) {
        row[tc] = (c == static_cast<int>(tc) ? 1.0 : 0.0) - mean_type[tc];
      }
      row[n_type_cols] = std::log(p.attrs[k].travel_minutes) - mean_logb1;
      row[n_type_cols + 1] = std::log(p.attrs[k].closer_count + 1.0) - mean_logb2;
      for (std::size_t cidx = 0; cidx < ncol; ++cidx) {
        if (std::fabs(row[cidx]) > 1e-12) col_used[cidx] = true;
      }
      xrows.push_back(std::move(row));
      yrows.push_back(std::log(p.shares[k]) - mean_logq);
    }
  }
  require(!xrows.empty(), "bad_params", "training split produced no usable rows");

  std::vector<std::size_t> active;
  for (std::size_t c = 0; c < ncol; ++c) {
    if (col_used[c]) active.push_back(c);
  }
  if (active.empty()) {
    std::string all;
    for (const auto& n : col_names) {
      if (!all.empty()) all += ", ";
      all += n;
    }
    fail("rank_deficient",
         "no design variation: every column is constant within the choice sets (" + all + ")");
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(xrows.size()),
                    static_cast<Eigen::Index>(active.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(yrows.size()));
  for (std::size_t r = 0; r < xrows.size(); ++r) {
    for (std::size_t c = 0; c < active.size(); ++c) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = xrows[r][active[c]];
    }
    y(static_cast<Eigen::Index>(r)) = yrows[r];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) {
    std::string cols;
    const auto perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < x.cols(); ++k) {
      if (!cols.empty()) cols += ", ";
      cols += col_names[active[static_cast<std::size_t>(perm[k])]];
    }
    fail("rank_deficient", "collinear design columns: " + cols);
  }
  const Eigen::VectorXd coef = qr.solve(y);

  MciFit fit;
  fit.params.tau = {{FacilityType::hospital, 0.0},
                    {FacilityType::health_center, 0.0},
                    {FacilityType::health_post, 0.0},
                    {FacilityType::chw, 0.0}};
  fit.params.beta1 = 0.0;
  fit.params.beta2 = 0.0;
  for (std::size_t c = 0; c < active.size(); ++c) {
    const double v = coef(static_cast<Eigen::Index>(c));
    if (active[c] < n_type_cols) {
      fit.params.tau[col_types[active[c]]] = v;
    } else if (active[c] == n_type_cols) {
      fit.params.beta1 = v;
    } else {
      fit.params.beta2 = v;
    }
  }
  fit.n_train = n_train;
  fit.n_test = order.size() - n_train;

  std::size_t matches = 0, tested = 0, set_size_total = 0;
  for (std::size_t idx = n_train; idx < order.size(); ++idx) {
    const PseudoPatient& p = pseudo[order[idx]];
    if (p.attrs.empty()) continue;
    const auto q = choice_probs(p.attrs, fit.params);
    std::size_t best = 0;
    for (std::size_t k = 1; k < q.size(); ++k) {
      if (q[k] > q[best]) best = k;
    }
    ++tested;
    set_size_total += p.attrs.size();
    if (p.attrs[best].facility == p.visited) ++matches;
  }
  fit.top1_match_rate = tested ? static_cast<double>(matches) / tested : 0.0;
  fit.mean_choice_set_size = tested ? static_cast<double>(set_size_total) / tested : 0.0;
  return fit;
}

// ---------------------------------------------------------------------------
// Weight matrix construction and the CHW micro-catchment adjustment
// ---------------------------------------------------------------------------

struct WeightBuildOptions {
  double accessibility_ceiling_minutes = 1505.0;  // largest default bracket edge
  long no_access_fallbacks = 0;                   // warning counters, set by the build
  long unreachable_cells = 0;
};

/**
 * Builds the month-t weight matrix: rows of populated cells carry the
 * choice probabilities over active non-CHW facilities within the
 * accessibility ceiling; unpopulated cells stay empty. A populated cell
 * with no facility under the ceiling falls back to the single cheapest
 * reachable facility (counted as a warning); a populated cell reaching
 * nothing at all stays empty and is counted separately.
 */
inline WeightMatrix build_weight_matrix(const FacilityRegistry& registry,
                                        const ChoiceModelParams& params,
                                        const std::vector<Raster>& travel_by_facility,
                                        const Raster& population, int month,
                                        WeightBuildOptions& options) {
  const GridSpec& spec = population.spec;
  const auto active = registry.active_indices(month, /*include_chws=*/false);
  require(!active.empty(), "no_active_facility",
          "no non-CHW facility active at month " + std::to_string(month));
  for (std::size_t j : active) {
    require_compatible(travel_by_facility[j].spec, spec, "build_weight_matrix");
  }
  WeightMatrix w(static_cast<int>(spec.size()), static_cast<int>(registry.size()));
  options.no_access_fallbacks = 0;
  options.unreachable_cells = 0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (population.missing[i] || population.values[i] <= 0.0) continue;
    std::vector<std::size_t> accessible;
    std::size_t cheapest = registry.size();
    double cheapest_cost = std::numeric_limits<double>::infinity();
    for (std::size_t j : active) {
      if (travel_by_facility[j].missing[i]) continue;
      const double cost = travel_by_facility[j].values[i];
      if (cost < cheapest_cost) {
        cheapest_cost = cost;
        cheapest = j;
      }
      if (cost <= options.accessibility_ceiling_minutes) accessible.push_back(j);
    }
    if (accessible.empty()) {
      if (cheapest == registry.size()) {
        ++options.unreachable_cells;  // nothing reachable at all
        continue;
      }
      ++options.no_access_fallbacks;
      accessible.push_back(cheapest);
    }
    const auto attrs = compute_attributes(i, registry, accessible, travel_by_facility);
    const auto q = choice_probs(attrs, params);
    for (std::size_t k = 0; k < attrs.size(); ++k) {
      w.rows[i].push_back({static_cast<std::int32_t>(attrs[k].facility), q[k]});
    }
    std::sort(w.rows[i].begin(), w.rows[i].end());
  }
  return w;
}

/// Logistic attendance curve for CHWs: p(delta) with delta the cost gap
/// between the nearest facility and the nearest CHW (minutes). Increasing
/// in delta; p(0) = 0.5 under a symmetric calibration (zero intercept).
struct ChwCurve {
  double intercept = 0.0;
  double slope = 0.02;  // per minute of cost difference

  double attendance(double delta) const {
    return 1.0 / (1.0 + std::exp(-(intercept + slope * delta)));
  }
};

/// Least-squares calibration of the curve on (delta, proportion) points via
/// the logit transform; exact on noiseless logistic data.
inline ChwCurve calibrate_chw_curve(const std::vector<std::pair<double, double>>& points) {
  require(points.size() >= 2, "bad_params", "need at least two calibration points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [delta, p] : points) {
    require(p > 0.0 && p < 1.0, "bad_params", "calibration proportions must lie in (0,1)");
    const double y = std::log(p / (1.0 - p));
    sx += delta;
    sy += y;
    sxx += delta * delta;
    sxy += delta * y;
  }
  const double n = static_cast<double>(points.size());
  const double denom = n * sxx - sx * sx;
  require(std::fabs(denom) > 1e-12, "bad_params", "calibration points are degenerate");
  ChwCurve c;
  c.slope = (n * sxy - sx * sy) / denom;
  c.intercept = (sy - c.slope * sx) / n;
  return c;
}

/**
 * CHW micro-catchments: each active CHW serves the 9x9 Chebyshev block
 * (order-4 neighbourhood) around its cell. Within the block, a populated
 * cell sends probability p(delta) to its nearest CHW and scales the rest of
 * its row by 1 - p, keeping the row sum at one. Cells covered by several
 * CHW blocks use the cheapest CHW (ties by registry order).
 */
inline WeightMatrix chw_adjust(const WeightMatrix& w, const FacilityRegistry& registry,
                               const std::vector<Raster>& travel_by_facility, int month,
                               const ChwCurve& curve) {
  WeightMatrix out = w;
  require(!travel_by_facility.empty(), "missing_input", "no travel rasters supplied");
  const GridSpec& spec = travel_by_facility[0].spec;
  struct ChwSite {
    std::size_t index;
    int col, row;
  };
  std::vector<ChwSite> chws;
  for (std::size_t j = 0; j < registry.size(); ++j) {
    if (registry.is_chw(j) && registry.active_at(j, month)) {
      const std::size_t cell = registry.cell_of(j, spec);  // off-grid CHW errors here
      chws.push_back({j, spec.col_of_index(cell), spec.row_of_index(cell)});
    }
  }
  if (chws.empty()) return out;

  const auto facilities = registry.active_indices(month, /*include_chws=*/false);
  require(!facilities.empty(), "no_active_facility", "no facility to compare CHWs against");

  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (out.rows[i].empty()) continue;  // unpopulated or unreachable
    const int col = spec.col_of_index(i);
    const int row = spec.row_of_index(i);
    std::size_t best_chw = registry.size();
    double best_cost = std::numeric_limits<double>::infinity();
    for (const ChwSite& c : chws) {
      if (std::max(std::abs(c.col - col), std::abs(c.row - row)) > 4) continue;
      if (travel_by_facility[c.index].missing[i]) continue;
      const double cost = travel_by_facility[c.index].values[i];
      if (cost < best_cost) {
        best_cost = cost;
        best_chw = c.index;
      }
    }
    if (best_chw == registry.size()) continue;
    double fac_cost = std::numeric_limits<double>::infinity();
    for (std::size_t j : facilities) {
      if (!travel_by_facility[j].missing[i]) {
        fac_cost = std::min(fac_cost, travel_by_facility[j].values[i]);
      }
    }
    if (!std::isfinite(fac_cost)) continue;
    const double p = curve.attendance(fac_cost - best_cost);
    for (auto& [j, wt] : out.rows[i]) wt *= (1.0 - p);
    auto& row_entries = out.rows[i];
    const auto it = std::lower_bound(
        row_entries.begin(), row_entries.end(),
        std::pair<std::int32_t, double>{static_cast<std::int32_t>(best_chw), -1.0});
    row_entries.insert(it, {static_cast<std::int32_t>(best_chw), p});
  }
  return out;
}

}  // namespace algcp
