#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "algcp/chain.hpp"
#include "algcp/lgcp.hpp"
#include "support/instances.hpp"
#include "support/stats.hpp"

using namespace algcp;

namespace {

/// Straight dense transcription of the marginal likelihood for cross-checks.
double dense_loglik_oracle(const LgcpData& d, const std::vector<double>& beta,
                           const std::vector<double>& ywin) {
  const std::size_t n = d.n_cells();
  double ll = 0.0;
  for (std::size_t t = 0; t < d.n_months(); ++t) {
    // dense W
    std::vector<std::vector<double>> w(n, std::vector<double>(d.n_facilities(), 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& [j, wij] : d.weights[t].rows[i]) {
        w[i][static_cast<std::size_t>(j)] = wij;
      }
    }
    for (std::size_t j = 0; j < d.n_facilities(); ++j) {
      if (d.panel.is_missing(j, t)) continue;
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double eta = ywin[t * n + i];
        for (std::size_t k = 0; k < d.n_cov(); ++k) eta += beta[k] * d.design[k][t][i];
        mu += w[i][j] * d.offsets[t][i] * std::exp(eta);
      }
      const double y = d.panel.y(j, t);
      ll += y * std::log(mu) - mu - std::lgamma(y + 1.0);
    }
  }
  return ll;
}

}  // namespace

TEST_CASE("log likelihood of one count at unit mean is -1", "[lgcp]") {
  LgcpData d;
  d.window = GridSpec{1, 1, 0, 0, 1.0};
  d.months = {0};
  d.panel = ObservationPanel({"hf0"}, {0});
  d.panel.set(0, 0, 1.0);
  WeightMatrix w(1, 1);
  w.rows[0].push_back({0, 1.0});
  d.weights = {w};
  d.offsets = {{1.0}};
  d.covariate_names = {"intercept"};
  d.design = {{{0.0}}};  // zero design column: Z beta = 0 regardless of beta
  d.validate();
  LikelihoodWorkspace ws;
  const double ll = marginal_loglik(d, {0.0}, {0.0}, ws);
  CHECK(ll == Catch::Approx(-1.0));
}

TEST_CASE("splitting a facility 50/50 leaves the total mean unchanged", "[lgcp]") {
  auto base = testinst::random_instance(3, 3, 2, 1, 41);
  // duplicate the single facility, halving the weights
  LgcpData split = base;
  split.panel = ObservationPanel({"hf0", "hf0b"}, base.months);
  for (std::size_t t = 0; t < base.panel.n_months(); ++t) {
    const double y = base.panel.y(0, t);
    split.panel.set(0, t, std::floor(y / 2));
    split.panel.set(1, t, y - std::floor(y / 2));
  }
  for (auto& w : split.weights) {
    w.n_facilities = 2;
    for (auto& row : w.rows) {
      std::vector<std::pair<std::int32_t, double>> nr;
      for (auto& [j, wt] : row) {
        nr.push_back({0, wt / 2});
        nr.push_back({1, wt / 2});
      }
      row = nr;
    }
  }
  split.validate();

  std::vector<double> beta{0.3};
  std::vector<double> ywin(base.n_cells() * base.n_months(), 0.1);
  LikelihoodWorkspace wa, wb;
  (void)marginal_loglik(base, beta, ywin, wa);
  (void)marginal_loglik(split, beta, ywin, wb);
  for (std::size_t t = 0; t < base.n_months(); ++t) {
    const double mu_base = wa.mu[t * 1 + 0];
    const double mu_split = wb.mu[t * 2 + 0] + wb.mu[t * 2 + 1];
    CHECK(mu_split == Catch::Approx(mu_base).epsilon(1e-12));
  }
}

TEST_CASE("marginal likelihood matches a dense oracle", "[lgcp]") {
  const auto d = testinst::random_instance(4, 3, 2, 3, 7, 0.2);
  Rng rng(17);
  std::vector<double> beta{0.2, -0.4};
  std::vector<double> ywin(d.n_cells() * d.n_months());
  for (auto& y : ywin) y = 0.3 * rng.normal();
  LikelihoodWorkspace ws;
  const double got = marginal_loglik(d, beta, ywin, ws);
  const double want = dense_loglik_oracle(d, beta, ywin);
  CHECK(got == Catch::Approx(want).epsilon(1e-10));
}

TEST_CASE("likelihood is invariant to permuting facility columns", "[lgcp]") {
  const auto d = testinst::random_instance(4, 4, 3, 4, 23, 0.15);
  std::vector<double> beta{0.1, 0.2};
  Rng rng(29);
  std::vector<double> ywin(d.n_cells() * d.n_months());
  for (auto& y : ywin) y = 0.2 * rng.normal();

  // permute facilities: j -> perm[j]
  const std::vector<int> perm{2, 0, 3, 1};
  LgcpData p = d;
  p.panel = ObservationPanel({"a", "b", "c", "d"}, d.months);
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t t = 0; t < d.panel.n_months(); ++t) {
      if (d.panel.is_missing(j, t)) {
        p.panel.set_missing(static_cast<std::size_t>(perm[j]), t);
      } else {
        p.panel.set(static_cast<std::size_t>(perm[j]), t, d.panel.y(j, t));
      }
    }
  }
  for (auto& w : p.weights) {
    for (auto& row : w.rows) {
      for (auto& [j, wt] : row) j = perm[static_cast<std::size_t>(j)];
      std::sort(row.begin(), row.end());
    }
  }
  LikelihoodWorkspace wa, wb;
  const double la = marginal_loglik(d, beta, ywin, wa);
  const double lb = marginal_loglik(p, beta, ywin, wb);
  CHECK(la == Catch::Approx(lb).epsilon(1e-12));
}

TEST_CASE("zero mean with a positive count returns -infinity and flags it", "[lgcp]") {
  LgcpData d;
  d.window = GridSpec{1, 1, 0, 0, 1.0};
  d.months = {0};
  d.panel = ObservationPanel({"hf0"}, {0});
  d.panel.set(0, 0, 2.0);
  WeightMatrix w(1, 1);  // empty row: nothing reaches the facility
  d.weights = {w};
  d.offsets = {{0.0}};
  d.covariate_names = {"intercept"};
  d.design = {{{1.0}}};
  d.validate();
  LikelihoodWorkspace ws;
  const double ll = marginal_loglik(d, {0.0}, {0.0}, ws);
  CHECK(std::isinf(ll));
  CHECK(ll < 0);
  CHECK(ws.zero_mu_positive == 1);
}

TEST_CASE("offset adjustment reproduces the missing-report formula", "[lgcp]") {
  GridSpec spec{2, 1, 0, 0, 1.0};
  LgcpData d;
  d.window = spec;
  d.months = {0};
  d.panel = ObservationPanel({"a", "b"}, {0});
  d.panel.set(0, 0, 1.0);   // a reports
  d.panel.set_missing(1, 0);  // b does not
  WeightMatrix w(2, 2);
  w.rows[0] = {{0, 0.6}, {1, 0.4}};
  w.rows[1] = {{1, 1.0}};
  const std::vector<std::vector<double>> e{{10.0, 5.0}};
  const auto estar = adjust_offsets_for_missing(e, {w}, d.panel);
  CHECK(estar[0][0] == Catch::Approx(0.6 * 10.0));  // w_miss = 0.4
  CHECK(estar[0][1] == Catch::Approx(0.0));         // whole row went to the non-reporter

  // no missing facilities: E* = E
  ObservationPanel full({"a", "b"}, {0});
  full.set(0, 0, 1.0);
  full.set(1, 0, 2.0);
  const auto same = adjust_offsets_for_missing(e, {w}, full);
  CHECK(same[0][0] == 10.0);
  CHECK(same[0][1] == 5.0);
}

TEST_CASE("reporting-weight identity and monotonicity of the adjustment", "[lgcp]") {
  const auto d = testinst::random_instance(4, 4, 2, 5, 99, 0.3);
  const auto estar = adjust_offsets_for_missing(d.offsets, d.weights, d.panel);
  for (std::size_t t = 0; t < d.n_months(); ++t) {
    for (std::size_t i = 0; i < d.n_cells(); ++i) {
      double reporting_mass = 0.0;
      for (const auto& [j, wij] : d.weights[t].rows[i]) {
        if (!d.panel.is_missing(static_cast<std::size_t>(j), t)) reporting_mass += wij;
      }
      CHECK(estar[t][i] ==
            Catch::Approx(reporting_mass * d.offsets[t][i]).margin(1e-12));
      CHECK(estar[t][i] >= -1e-12);
      CHECK(estar[t][i] <= d.offsets[t][i] + 1e-12);
    }
  }
  // marking one more facility missing never increases any E*
  LgcpData worse = d;
  std::size_t j_extra = 0;
  bool found = false;
  for (std::size_t j = 0; j < d.panel.n_facilities() && !found; ++j) {
    if (!d.panel.is_missing(j, 0)) {
      j_extra = j;
      found = true;
    }
  }
  REQUIRE(found);
  worse.panel.set_missing(j_extra, 0);
  const auto estar2 = adjust_offsets_for_missing(worse.offsets, worse.weights, worse.panel);
  for (std::size_t t = 0; t < d.n_months(); ++t) {
    for (std::size_t i = 0; i < d.n_cells(); ++i) {
      CHECK(estar2[t][i] <= estar[t][i] + 1e-12);
    }
  }
}

TEST_CASE("corrupt weights with missing mass above one are rejected", "[lgcp]") {
  LgcpData d;
  d.window = GridSpec{1, 1, 0, 0, 1.0};
  d.months = {0};
  d.panel = ObservationPanel({"a", "b"}, {0});
  d.panel.set_missing(0, 0);
  d.panel.set_missing(1, 0);
  WeightMatrix w(1, 2);
  w.rows[0] = {{0, 0.7}, {1, 0.5}};  // sums to 1.2
  CHECK_THROWS_AS(adjust_offsets_for_missing({{1.0}}, {w}, d.panel), Error);
}

TEST_CASE("posterior gradient matches central finite differences", "[lgcp]") {
  const auto d = testinst::random_instance(4, 4, 2, 3, 31, 0.2);
  FieldModel fm(d.window, static_cast<int>(d.n_months()), 0.9, 0.15, 3.0);
  HyperPriors priors;
  Rng rng(5);
  std::vector<double> beta{0.4, -0.3};
  std::vector<double> gamma(fm.ext_size() * d.n_months());
  for (auto& g : gamma) g = 0.5 * rng.normal();

  PosteriorPoint point;
  evaluate_log_posterior(d, fm, priors, beta, gamma, true, point);

  auto value_at = [&](const std::vector<double>& b, const std::vector<double>& g) {
    PosteriorPoint p;
    evaluate_log_posterior(d, fm, priors, b, g, false, p);
    return p.log_posterior;
  };

  const double h = 1e-5;
  for (std::size_t k = 0; k < beta.size(); ++k) {
    auto bp = beta, bm = beta;
    bp[k] += h;
    bm[k] -= h;
    const double fd = (value_at(bp, gamma) - value_at(bm, gamma)) / (2 * h);
    CHECK(point.grad_beta[k] == Catch::Approx(fd).epsilon(1e-5));
  }
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t i = rng.next_u64() % gamma.size();
    auto gp = gamma, gm = gamma;
    gp[i] += h;
    gm[i] -= h;
    const double fd = (value_at(beta, gp) - value_at(beta, gm)) / (2 * h);
    CHECK(point.grad_gamma[i] == Catch::Approx(fd).epsilon(1e-5).margin(1e-7));
  }
}

TEST_CASE("with zero counts the innovation gradient is minus Gamma plus the pullback",
          "[lgcp]") {
  auto d = testinst::random_instance(3, 3, 2, 2, 61);
  for (std::size_t j = 0; j < d.panel.n_facilities(); ++j) {
    for (std::size_t t = 0; t < d.panel.n_months(); ++t) d.panel.set(j, t, 0.0);
  }
  FieldModel fm(d.window, 2, 1.0, 0.2, 2.0);
  HyperPriors priors;
  std::vector<double> beta{0.0, 0.0};
  std::vector<double> gamma(fm.ext_size() * 2, 0.0);
  PosteriorPoint point;
  evaluate_log_posterior(d, fm, priors, beta, gamma, true, point);
  // pullback of -Lambda alone (prior term vanishes at Gamma = 0)
  std::vector<double> grad_y(d.n_cells() * 2);
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t i = 0; i < d.n_cells(); ++i) {
      double mass = 0.0;
      for (const auto& [j, wij] : d.weights[t].rows[i]) mass += wij;
      grad_y[t * d.n_cells() + i] = -point.ws.lambda[t * d.n_cells() + i] * mass;
    }
  }
  std::vector<double> want;
  detail::pull_back_to_innovations(fm, d.n_cells(), 2, grad_y, want, 1);
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(point.grad_gamma[i] == Catch::Approx(want[i]).margin(1e-12));
  }
}

TEST_CASE("beta gradient vanishes at the GLM maximum with the field held flat", "[lgcp]") {
  // single-cell catchments make the aggregated model an ordinary Poisson
  // GLM; fit it by IRLS in the test and check the engine gradient is zero.
  const int n_fac = 6;
  LgcpData d;
  d.window = GridSpec{3, 2, 0, 0, 1.0};
  d.months = {0, 1};
  std::vector<std::string> ids;
  for (int j = 0; j < n_fac; ++j) ids.push_back("hf" + std::to_string(j));
  d.panel = ObservationPanel(ids, d.months);
  Rng rng(71);
  d.covariate_names = {"intercept", "z1"};
  d.design.resize(2);
  for (int t = 0; t < 2; ++t) {
    std::vector<double> z0(6, 1.0), z1(6);
    for (auto& v : z1) v = rng.normal();
    d.design[0].push_back(z0);
    d.design[1].push_back(z1);
  }
  for (int t = 0; t < 2; ++t) {
    WeightMatrix w(6, n_fac);
    for (int i = 0; i < 6; ++i) w.rows[static_cast<std::size_t>(i)].push_back({i, 1.0});
    d.weights.push_back(w);
    d.offsets.push_back(std::vector<double>(6, 2.0));
  }
  const double sigma = 0.8;
  const double ymean = -0.5 * sigma * sigma;
  for (std::size_t j = 0; j < d.panel.n_facilities(); ++j) {
    for (std::size_t t = 0; t < 2; ++t) {
      const double mu = 2.0 * std::exp(0.5 + 0.7 * d.design[1][t][j] + ymean);
      d.panel.set(j, t, static_cast<double>(rng.poisson(mu)));
    }
  }
  d.validate();

  // IRLS for Poisson regression with offset log(E) + ymean
  double b0 = 0.0, b1 = 0.0;
  for (int it = 0; it < 60; ++it) {
    double g0 = 0, g1 = 0, h00 = 0, h01 = 0, h11 = 0;
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t i = 0; i < 6; ++i) {
        const double z = d.design[1][t][i];
        const double mu = 2.0 * std::exp(b0 + b1 * z + ymean);
        const double r = d.panel.y(i, t) - mu;
        g0 += r;
        g1 += r * z;
        h00 += mu;
        h01 += mu * z;
        h11 += mu * z * z;
      }
    }
    const double det = h00 * h11 - h01 * h01;
    b0 += (h11 * g0 - h01 * g1) / det;
    b1 += (-h01 * g0 + h00 * g1) / det;
  }

  FieldModel fm(d.window, 2, sigma, 0.2, 2.0);
  HyperPriors priors;
  std::vector<double> gamma(fm.ext_size() * 2, 0.0);  // field at its mean
  PosteriorPoint point;
  evaluate_log_posterior(d, fm, priors, {b0, b1}, gamma, true, point);
  double total = 0.0;
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t j = 0; j < d.panel.n_facilities(); ++j) total += d.panel.y(j, t);
  }
  CHECK(std::fabs(point.grad_beta[0]) <= 1e-6 * std::max(1.0, total));
  CHECK(std::fabs(point.grad_beta[1]) <= 1e-6 * std::max(1.0, total));
}

TEST_CASE("augmentation allocates counts exactly and in proportion", "[lgcp]") {
  Rng rng(314);
  // y = 0: nothing allocated
  CHECK(augment_cell_counts(0.0, {{0, 0.5}, {1, 0.5}}, nullptr, rng).empty());
  // single support cell takes everything
  {
    const double lambda[2] = {3.0, 1.0};
    const auto alloc = augment_cell_counts(7.0, {{1, 1.0}}, lambda, rng);
    REQUIRE(alloc.size() == 1);
    CHECK(alloc[0].first == 1);
    CHECK(alloc[0].second == 7);
  }
  // all-zero probabilities with positive count is an error
  {
    const double lambda[2] = {0.0, 0.0};
    CHECK_THROWS_AS(augment_cell_counts(3.0, {{0, 0.5}, {1, 0.5}}, lambda, rng), Error);
  }
  // equal products split evenly: total over 1000 draws of y = 10^4 behaves
  // as Binomial(10^7, 1/2)
  {
    const double lambda[2] = {2.0, 2.0};
    long first = 0;
    const long y = 10000, draws = 1000;
    for (long k = 0; k < draws; ++k) {
      for (const auto& [cell, cnt] : augment_cell_counts(
               static_cast<double>(y), {{0, 0.5}, {1, 0.5}}, lambda, rng)) {
        if (cell == 0) first += cnt;
      }
    }
    const double total = static_cast<double>(y * draws);
    const double se = std::sqrt(0.25 * total);
    CHECK(std::fabs(static_cast<double>(first) - 0.5 * total) <= 3.0 * se);
  }
}

TEST_CASE("panel csv round-trips and keeps missing distinct from zero", "[lgcp]") {
  namespace fs = std::filesystem;
  ObservationPanel p({"a", "b"}, {0, 1});
  p.set(0, 0, 0.0);  // reported zero
  p.set(0, 1, 5.0);
  p.set_missing(1, 0);
  p.set(1, 1, 2.0);
  const std::string path = (fs::temp_directory_path() / "algcp_panel.csv").string();
  save_panel_csv(path, p);
  const auto back = load_panel_csv(path, {"a", "b"}, {0, 1});
  CHECK_FALSE(back.is_missing(0, 0));
  CHECK(back.y(0, 0) == 0.0);
  CHECK(back.is_missing(1, 0));
  CHECK(back.y(0, 1) == 5.0);
  CHECK(back.reporting_count() == 3);
  std::remove(path.c_str());
}
