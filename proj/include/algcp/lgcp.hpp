#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "algcp/gaussian_field.hpp"
#include "algcp/grid.hpp"
#include "algcp/rng.hpp"
#include "algcp/weights.hpp"

namespace algcp {

/// Facility-by-month confirmed case counts. A missing entry is an active
/// facility that did not report; it is never conflated with a reported zero.
struct ObservationPanel {
  std::vector<std::string> facility_ids;
  std::vector<int> months;       // global month indices, one per column
  std::vector<double> counts;    // [facility * n_months + t]
  std::vector<std::uint8_t> missing;

  ObservationPanel() = default;
  ObservationPanel(std::vector<std::string> ids, std::vector<int> month_list)
      : facility_ids(std::move(ids)), months(std::move(month_list)) {
    counts.assign(facility_ids.size() * months.size(), 0.0);
    missing.assign(facility_ids.size() * months.size(), 1);
  }

  std::size_t n_facilities() const { return facility_ids.size(); }
  std::size_t n_months() const { return months.size(); }
  std::size_t at(std::size_t j, std::size_t t) const { return j * n_months() + t; }

  double y(std::size_t j, std::size_t t) const { return counts[at(j, t)]; }
  bool is_missing(std::size_t j, std::size_t t) const { return missing[at(j, t)] != 0; }
  void set(std::size_t j, std::size_t t, double value) {
    counts[at(j, t)] = value;
    missing[at(j, t)] = 0;
  }
  void set_missing(std::size_t j, std::size_t t) {
    counts[at(j, t)] = 0.0;
    missing[at(j, t)] = 1;
  }

  std::size_t reporting_count() const {
    std::size_t n = 0;
    for (auto m : missing) n += (m == 0);
    return n;
  }
};

/// Panel CSV: facility_id,month,count with a blank count marking MISSING.
/// Rows absent from the file are missing as well.
inline void save_panel_csv(const std::string& path, const ObservationPanel& p) {
  std::ostringstream out;
  out << "facility_id,month,count\n";
  for (std::size_t j = 0; j < p.n_facilities(); ++j) {
    for (std::size_t t = 0; t < p.n_months(); ++t) {
      out << p.facility_ids[j] << ',' << p.months[t] << ',';
      if (!p.is_missing(j, t)) out << p.y(j, t);
      out << '\n';
    }
  }
  write_file_text(path, out.str());
}

inline ObservationPanel load_panel_csv(const std::string& path,
                                       const std::vector<std::string>& facility_ids,
                                       const std::vector<int>& months) {
  ObservationPanel panel(facility_ids, months);
  std::istringstream in(read_file_text(path));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "parse_error", path + " is empty");
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    require(f.size() >= 3, "parse_error", path + ": expected facility_id,month,count");
    const std::string id = trim(f[0]);
    const int month = std::stoi(f[1]);
    std::size_t j = facility_ids.size();
    for (std::size_t k = 0; k < facility_ids.size(); ++k) {
      if (facility_ids[k] == id) {
        j = k;
        break;
      }
    }
    require(j < facility_ids.size(), "parse_error", path + ": unknown facility id " + id);
    std::size_t t = months.size();
    for (std::size_t k = 0; k < months.size(); ++k) {
      if (months[k] == month) {
        t = k;
        break;
      }
    }
    if (t == months.size()) continue;  // outside the block
    const std::string cell = trim(f[2]);
    if (cell.empty()) {
      panel.set_missing(j, t);
    } else {
      const double v = std::stod(cell);
      require(v >= 0.0 && std::isfinite(v), "parse_error", path + ": negative or non-finite count");
      panel.set(j, t, v);
    }
  }
  return panel;
}

/// Everything the likelihood needs, dimension-checked once up front.
/// Offsets are expected counts per cell-month (population x seeking
/// probability when fitting, population alone when predicting).
struct LgcpData {
  GridSpec window;
  std::vector<int> months;
  std::vector<WeightMatrix> weights;                     // one per month
  std::vector<std::vector<double>> offsets;              // E[t][cell]
  std::vector<std::string> covariate_names;              // k=0 is the intercept
  std::vector<std::vector<std::vector<double>>> design;  // Z[k][t][cell]
  ObservationPanel panel;

  std::size_t n_cells() const { return window.size(); }
  std::size_t n_months() const { return months.size(); }
  std::size_t n_cov() const { return design.size(); }
  std::size_t n_facilities() const { return panel.n_facilities(); }

  void validate() const {
    window.validate();
    require(!months.empty(), "bad_params", "no months in block");
    require(panel.months == months, "bad_params", "panel months do not match block months");
    require(weights.size() == months.size(), "bad_params", "need one weight matrix per month");
    require(offsets.size() == months.size(), "bad_params", "need offsets for every month");
    require(!design.empty(), "bad_params", "design needs at least the intercept column");
    for (const auto& wm : weights) {
      require(wm.n_cells == static_cast<int>(n_cells()), "bad_params",
              "weight matrix cell count mismatch");
      require(wm.n_facilities == static_cast<int>(n_facilities()), "bad_params",
              "weight matrix facility count mismatch");
    }
    for (const auto& e : offsets) {
      require(e.size() == n_cells(), "bad_params", "offset vector length mismatch");
    }
    for (const auto& zk : design) {
      require(zk.size() == months.size(), "bad_params", "design month count mismatch");
      for (const auto& zt : zk) {
        require(zt.size() == n_cells(), "bad_params", "design cell count mismatch");
      }
    }
  }
};

/**
 * Missing-report offset adjustment: E*_i = (1 - sum of w_ij over
 * non-reporting facilities) * E_i, per month. Individuals keep attending
 * their facility whether or not it reports, so the observed fraction of
 * cell i's cases is exactly the reporting share of its row mass; cells
 * whose whole row went to non-reporters drop out of the window (E* = 0).
 */
inline std::vector<std::vector<double>> adjust_offsets_for_missing(
    const std::vector<std::vector<double>>& offsets, const std::vector<WeightMatrix>& weights,
    const ObservationPanel& panel) {
  require(offsets.size() == weights.size() && offsets.size() == panel.n_months(), "bad_params",
          "offset/weight/panel month counts differ");
  std::vector<std::vector<double>> out(offsets.size());
  for (std::size_t t = 0; t < offsets.size(); ++t) {
    const WeightMatrix& w = weights[t];
    out[t].assign(offsets[t].size(), 0.0);
    for (std::size_t i = 0; i < offsets[t].size(); ++i) {
      double missing_mass = 0.0;
      for (const auto& [j, wij] : w.rows[i]) {
        if (panel.is_missing(static_cast<std::size_t>(j), t)) missing_mass += wij;
      }
      require(missing_mass <= 1.0 + 1e-9, "corrupt_weights",
              "non-reporting weight mass exceeds 1 in cell " + std::to_string(i));
      out[t][i] = std::max(0.0, 1.0 - missing_mass) * offsets[t][i];
    }
  }
  return out;
}

/// Reusable evaluation buffers plus the intermediates the gradient needs.
struct LikelihoodWorkspace {
  std::vector<double> rate;      // exp(Z beta + Y), [t*ncells + i]
  std::vector<double> lambda;    // E * rate (full offsets)
  std::vector<double> mu;        // [t*nfac + j]
  std::vector<double> month_ll;  // per-month data log-likelihood parts
  long zero_mu_positive = 0;     // mu == 0 with y > 0 occurrences (=> -inf)
};

/**
 * Marginal facility-level Poisson log-likelihood:
 *   mu_jt = sum_i w_ij E_it exp(Z_it beta + Y_it)
 * summed over reporting (j, t) only; missing entries contribute nothing.
 * Returns -infinity (and counts the event) when a reporting facility has
 * y > 0 against mu == 0. Months are evaluated independently and combined
 * with a fixed-order pairwise sum, so the result is thread-count invariant.
 */
inline double marginal_loglik(const LgcpData& d, const std::vector<double>& beta,
                              const std::vector<double>& y_window, LikelihoodWorkspace& ws,
                              int threads = 1) {
  const std::size_t n = d.n_cells();
  const std::size_t T = d.n_months();
  const std::size_t m = d.n_facilities();
  ws.rate.resize(n * T);
  ws.lambda.resize(n * T);
  ws.mu.assign(m * T, 0.0);
  ws.month_ll.assign(T, 0.0);
  ws.zero_mu_positive = 0;
  std::vector<long> zero_mu(T, 0);

  parallel_for(T, threads, [&](std::size_t t) {
    double* rate = ws.rate.data() + t * n;
    double* lambda = ws.lambda.data() + t * n;
    const double* y = y_window.data() + t * n;
    const std::vector<double>& e = d.offsets[t];
    for (std::size_t i = 0; i < n; ++i) {
      double eta = y[i];
      for (std::size_t k = 0; k < d.n_cov(); ++k) eta += beta[k] * d.design[k][t][i];
      rate[i] = std::exp(eta);
      lambda[i] = e[i] * rate[i];
    }
    double* mu = ws.mu.data() + t * m;
    const WeightMatrix& w = d.weights[t];
    for (std::size_t i = 0; i < n; ++i) {
      if (lambda[i] == 0.0) continue;
      for (const auto& [j, wij] : w.rows[i]) {
        mu[static_cast<std::size_t>(j)] += wij * lambda[i];
      }
    }
    std::vector<double> terms;
    terms.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
      if (d.panel.is_missing(j, t)) continue;
      const double yj = d.panel.y(j, t);
      if (mu[j] <= 0.0) {
        if (yj > 0.0) {
          ++zero_mu[t];
        }
        continue;  // Poisson(0 | 0) contributes log 1 = 0
      }
      terms.push_back(yj * std::log(mu[j]) - mu[j] - std::lgamma(yj + 1.0));
    }
    ws.month_ll[t] = pairwise_sum(terms);
  });

  for (long z : zero_mu) ws.zero_mu_positive += z;
  if (ws.zero_mu_positive > 0) return -std::numeric_limits<double>::infinity();
  return pairwise_sum(ws.month_ll);
}

/**
 * Gradient of the marginal log-likelihood with respect to the window field
 * and beta, reusing a workspace filled by marginal_loglik at the same point:
 *   dL/dY_it = r_it = lambda_it * sum_j w_ij (y_jt / mu_jt - 1)
 *   dL/dbeta_k = sum_it Z_itk r_it
 */
inline void marginal_gradient(const LgcpData& d, const LikelihoodWorkspace& ws,
                              std::vector<double>& grad_beta, std::vector<double>& grad_y,
                              int threads = 1) {
  const std::size_t n = d.n_cells();
  const std::size_t T = d.n_months();
  const std::size_t m = d.n_facilities();
  grad_y.assign(n * T, 0.0);
  std::vector<std::vector<double>> beta_parts(T, std::vector<double>(d.n_cov(), 0.0));

  parallel_for(T, threads, [&](std::size_t t) {
    std::vector<double> q(m, 0.0);
    const double* mu = ws.mu.data() + t * m;
    for (std::size_t j = 0; j < m; ++j) {
      if (d.panel.is_missing(j, t)) continue;
      q[j] = (mu[j] > 0.0) ? d.panel.y(j, t) / mu[j] - 1.0 : -1.0;
    }
    const double* lambda = ws.lambda.data() + t * n;
    double* r = grad_y.data() + t * n;
    const WeightMatrix& w = d.weights[t];
    for (std::size_t i = 0; i < n; ++i) {
      if (lambda[i] == 0.0) continue;
      double acc = 0.0;
      for (const auto& [j, wij] : w.rows[i]) acc += wij * q[static_cast<std::size_t>(j)];
      r[i] = lambda[i] * acc;
    }
    for (std::size_t k = 0; k < d.n_cov(); ++k) {
      const std::vector<double>& zk = d.design[k][t];
      std::vector<double> terms(n);
      for (std::size_t i = 0; i < n; ++i) terms[i] = zk[i] * r[i];
      beta_parts[t][k] = pairwise_sum(terms);
    }
  });

  grad_beta.assign(d.n_cov(), 0.0);
  for (std::size_t k = 0; k < d.n_cov(); ++k) {
    std::vector<double> parts(T);
    for (std::size_t t = 0; t < T; ++t) parts[t] = beta_parts[t][k];
    grad_beta[k] = pairwise_sum(parts);
  }
}

/**
 * Data augmentation: allocates one facility-month's count to cells of its
 * catchment, X_i ~ Multinomial(y_jt, p_i proportional to w_ij Lambda_it).
 * Totals are preserved exactly. Errors when all probabilities vanish
 * against a positive count.
 */
inline std::vector<std::pair<std::size_t, long>> augment_cell_counts(
    double y_jt, const std::vector<std::pair<std::int32_t, double>>& column,
    const double* lambda_t, Rng& rng) {
  std::vector<std::pair<std::size_t, long>> out;
  const long y = static_cast<long>(std::llround(y_jt));
  if (y == 0) return out;
  std::vector<double> weights(column.size());
  double total = 0.0;
  for (std::size_t k = 0; k < column.size(); ++k) {
    weights[k] = column[k].second * lambda_t[column[k].first];
    total += weights[k];
  }
  require(total > 0.0, "zero_mass",
          "cannot allocate a positive count: all cell probabilities are zero");
  const std::vector<long> alloc = rng.multinomial(y, weights);
  for (std::size_t k = 0; k < column.size(); ++k) {
    if (alloc[k] > 0) out.push_back({static_cast<std::size_t>(column[k].first), alloc[k]});
  }
  return out;
}

/// Draws the full cell-level allocation X[t*ncells+i] over reporting
/// facility-months, in fixed (t, j) order from a single stream.
inline std::vector<double> draw_augmented_counts(const LgcpData& d,
                                                 const LikelihoodWorkspace& ws, Rng& rng) {
  const std::size_t n = d.n_cells();
  const std::size_t T = d.n_months();
  std::vector<double> x(n * T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto cols = d.weights[t].columns();
    const double* lambda = ws.lambda.data() + t * n;
    for (std::size_t j = 0; j < d.n_facilities(); ++j) {
      if (d.panel.is_missing(j, t)) continue;
      for (const auto& [cell, add] : augment_cell_counts(d.panel.y(j, t), cols[j], lambda, rng)) {
        x[t * n + cell] += static_cast<double>(add);
      }
    }
  }
  return x;
}

/// Cell-level Poisson log-likelihood for the augmented scheme, with the
/// missing-adjusted offsets E*: X_it ~ Poisson(E*_it exp(Z beta + Y)).
inline double augmented_loglik(const LgcpData& d, const std::vector<double>& beta,
                               const std::vector<double>& y_window,
                               const std::vector<double>& x_counts,
                               const std::vector<std::vector<double>>& offsets_star,
                               LikelihoodWorkspace& ws, int threads = 1) {
  const std::size_t n = d.n_cells();
  const std::size_t T = d.n_months();
  ws.rate.resize(n * T);
  ws.lambda.resize(n * T);
  ws.month_ll.assign(T, 0.0);
  ws.zero_mu_positive = 0;
  std::vector<long> zero_rate(T, 0);
  parallel_for(T, threads, [&](std::size_t t) {
    double* rate = ws.rate.data() + t * n;
    double* lambda = ws.lambda.data() + t * n;
    const double* y = y_window.data() + t * n;
    std::vector<double> terms;
    terms.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      double eta = y[i];
      for (std::size_t k = 0; k < d.n_cov(); ++k) eta += beta[k] * d.design[k][t][i];
      rate[i] = std::exp(eta);
      lambda[i] = d.offsets[t][i] * rate[i];  // full offsets, for the multinomial step
      const double lam_star = offsets_star[t][i] * rate[i];
      const double x = x_counts[t * n + i];
      if (lam_star <= 0.0) {
        if (x > 0.0) ++zero_rate[t];
        continue;
      }
      terms.push_back(x * std::log(lam_star) - lam_star - std::lgamma(x + 1.0));
    }
    ws.month_ll[t] = pairwise_sum(terms);
  });
  for (long z : zero_rate) ws.zero_mu_positive += z;
  if (ws.zero_mu_positive > 0) return -std::numeric_limits<double>::infinity();
  return pairwise_sum(ws.month_ll);
}

inline void augmented_gradient(const LgcpData& d, const LikelihoodWorkspace& ws,
                               const std::vector<double>& x_counts,
                               const std::vector<std::vector<double>>& offsets_star,
                               std::vector<double>& grad_beta, std::vector<double>& grad_y,
                               int threads = 1) {
  const std::size_t n = d.n_cells();
  const std::size_t T = d.n_months();
  grad_y.assign(n * T, 0.0);
  std::vector<std::vector<double>> beta_parts(T, std::vector<double>(d.n_cov(), 0.0));
  parallel_for(T, threads, [&](std::size_t t) {
    const double* rate = ws.rate.data() + t * n;
    double* r = grad_y.data() + t * n;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = x_counts[t * n + i] - offsets_star[t][i] * rate[i];
    }
    for (std::size_t k = 0; k < d.n_cov(); ++k) {
      const std::vector<double>& zk = d.design[k][t];
      std::vector<double> terms(n);
      for (std::size_t i = 0; i < n; ++i) terms[i] = zk[i] * r[i];
      beta_parts[t][k] = pairwise_sum(terms);
    }
  });
  grad_beta.assign(d.n_cov(), 0.0);
  for (std::size_t k = 0; k < d.n_cov(); ++k) {
    std::vector<double> parts(T);
    for (std::size_t t = 0; t < T; ++t) parts[t] = beta_parts[t][k];
    grad_beta[k] = pairwise_sum(parts);
  }
}

}  // namespace algcp
