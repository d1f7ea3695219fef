#pragma once

#include <array>
#include <filesystem>
#include <functional>

#include <json.hpp>

#include "algcp/lgcp.hpp"

namespace algcp {

struct HyperPriors {
  double beta_sd = 1e4;
  double log_sigma_mean = 0.0, log_sigma_sd = 0.3;
  double log_phi_mean = std::log(0.25), log_phi_sd = 0.3;
  double log_theta_mean = 0.0, log_theta_sd = 1.0;

  double log_density(double sigma, double phi, double theta) const {
    auto g = [](double x, double m, double s) {
      const double z = (x - m) / s;
      return -0.5 * z * z;
    };
    return g(std::log(sigma), log_sigma_mean, log_sigma_sd) +
           g(std::log(phi), log_phi_mean, log_phi_sd) +
           g(std::log(theta), log_theta_mean, log_theta_sd);
  }

  nlohmann::json to_json() const {
    return {{"beta_sd", beta_sd},
            {"log_sigma", {log_sigma_mean, log_sigma_sd}},
            {"log_phi", {log_phi_mean, log_phi_sd}},
            {"log_theta", {log_theta_mean, log_theta_sd}}};
  }
  static HyperPriors from_json(const nlohmann::json& j) {
    HyperPriors p;
    p.beta_sd = j.value("beta_sd", 1e4);
    auto pair = [&](const char* key, double& m, double& s) {
      if (j.contains(key)) {
        m = j.at(key).at(0).get<double>();
        s = j.at(key).at(1).get<double>();
      }
    };
    pair("log_sigma", p.log_sigma_mean, p.log_sigma_sd);
    pair("log_phi", p.log_phi_mean, p.log_phi_sd);
    pair("log_theta", p.log_theta_mean, p.log_theta_sd);
    return p;
  }
};

struct ChainConfig {
  long iterations = 15000;  // total, including burn-in
  long burnin = 5000;
  long thin = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  HyperPriors priors;
  double init_mala_step = 0.05;
  double init_hyper_step = 0.15;
  double mala_target = 0.574;   // Langevin optimum
  double hyper_target = 0.234;  // random-walk optimum
  bool update_hypers = true;
  bool augmented = false;  // multinomial-augmentation Gibbs variant
  int ext_factor = 2;
  bool allow_spectrum_clamp = false;
  bool record_fields = true;
  double init_sigma = 1.0;
  double init_phi = 0.25;
  double init_theta = 1.0;
  std::string block_id = "block";

  void validate() const {
    require(iterations >= 1 && burnin >= 0 && burnin < iterations && thin >= 1, "bad_params",
            "chain schedule invalid: need 0 <= burnin < iterations, thin >= 1");
    require(threads >= 1, "bad_params", "threads must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"iterations", iterations},
            {"burnin", burnin},
            {"thin", thin},
            {"seed", seed},
            {"priors", priors.to_json()},
            {"update_hypers", update_hypers},
            {"augmented", augmented},
            {"ext_factor", ext_factor},
            {"init", {init_sigma, init_phi, init_theta}},
            {"block_id", block_id}};
  }
};

/// Retained draws plus provenance; the basis of every map product.
struct PosteriorSamples {
  GridSpec window;
  std::vector<int> months;
  std::vector<std::string> covariate_names;
  std::vector<std::vector<double>> beta;
  std::vector<double> sigma, phi, theta, logpost;
  std::vector<std::vector<double>> fields;  // [draw][t*ncells + i]; may be empty

  std::string data_hash;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string block_id;
  double mala_acceptance = 0.0, hyper_acceptance = 0.0;
  long nonfinite_rejects = 0;
  double final_mala_step = 0.0, final_hyper_step = 0.0;

  std::size_t size() const { return sigma.size(); }

  void save(const std::string& dir) const;
  static PosteriorSamples load(const std::string& dir);
};

/// One retained draw as seen by a streaming consumer.
struct SampleView {
  const std::vector<double>& beta;
  double sigma, phi, theta, logpost;
  const std::vector<double>& field_window;  // [t*ncells + i]
};

/// A fully evaluated posterior point: value, likelihood intermediates and
/// (optionally) the gradient with respect to (beta, Gamma).
struct PosteriorPoint {
  double log_posterior = 0.0;
  double loglik = 0.0;
  LikelihoodWorkspace ws;
  std::vector<double> u, v, ywin;
  std::vector<double> grad_beta, grad_gamma;
};

namespace detail {

/// Zero-pads a window field gradient onto the torus and pulls it back
/// through the field maps (adjoint of sampling).
inline void pull_back_to_innovations(const FieldModel& fm, std::size_t n, std::size_t T,
                                     const std::vector<double>& grad_y_win,
                                     std::vector<double>& grad_gamma, int threads) {
  const std::size_t next = fm.ext_size();
  std::vector<double> grad_y_ext(next * T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double* g = grad_y_win.data() + t * n;
    double* ge = grad_y_ext.data() + t * next;
    for (std::size_t i = 0; i < n; ++i) ge[fm.ext_index_of_window_cell(i)] = g[i];
  }
  fm.field_gradient_to_innovations(grad_y_ext, grad_gamma, threads);
}

}  // namespace detail

/**
 * Log posterior density of (beta, Gamma) under the marginal facility
 * likelihood, and its exact gradient:
 *
 *   dL/dY_it = sum_j w_ij (y_jt / mu_jt - 1) Lambda_it, pulled back through
 *   the field square root and AR(1) mixing; the whitened prior contributes
 *   -Gamma and the beta prior -beta / sd^2.
 *
 * Used by the MALA kernel and checkable against finite differences.
 */
inline void evaluate_log_posterior(const LgcpData& d, const FieldModel& fm,
                                   const HyperPriors& priors, const std::vector<double>& beta,
                                   const std::vector<double>& gamma, bool with_gradient,
                                   PosteriorPoint& out, int threads = 1) {
  const std::size_t n = d.n_cells();
  const std::size_t T = d.n_months();
  const std::size_t next = fm.ext_size();
  fm.innovations_to_u(gamma, out.u, threads);
  fm.u_to_v(out.u, out.v);
  out.ywin.resize(n * T);
  for (std::size_t t = 0; t < T; ++t) {
    const double* v = out.v.data() + t * next;
    double* y = out.ywin.data() + t * n;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = fm.field_value(v[fm.ext_index_of_window_cell(i)]);
    }
  }
  out.loglik = marginal_loglik(d, beta, out.ywin, out.ws, threads);
  double prior = 0.0;
  const double bsd2 = priors.beta_sd * priors.beta_sd;
  for (double b : beta) prior -= 0.5 * b * b / bsd2;
  std::vector<double> g2(gamma.size());
  for (std::size_t i = 0; i < gamma.size(); ++i) g2[i] = gamma[i] * gamma[i];
  prior -= 0.5 * pairwise_sum(g2);
  out.log_posterior = out.loglik + prior;
  if (!with_gradient || !std::isfinite(out.log_posterior)) return;

  std::vector<double> grad_y_win;
  marginal_gradient(d, out.ws, out.grad_beta, grad_y_win, threads);
  for (std::size_t k = 0; k < out.grad_beta.size(); ++k) out.grad_beta[k] -= beta[k] / bsd2;
  detail::pull_back_to_innovations(fm, n, T, grad_y_win, out.grad_gamma, threads);
  for (std::size_t i = 0; i < out.grad_gamma.size(); ++i) out.grad_gamma[i] -= gamma[i];
}

namespace detail {

inline std::string hash_lgcp_data(const LgcpData& d) {
  std::uint64_t h = fnv1a64(&d.window, sizeof d.window);
  h = fnv1a64(d.months.data(), d.months.size() * sizeof(int), h);
  h = fnv1a64(d.panel.counts.data(), d.panel.counts.size() * sizeof(double), h);
  h = fnv1a64(d.panel.missing.data(), d.panel.missing.size(), h);
  for (const auto& e : d.offsets) h = fnv1a64(e.data(), e.size() * sizeof(double), h);
  for (const auto& zk : d.design) {
    for (const auto& zt : zk) h = fnv1a64(zt.data(), zt.size() * sizeof(double), h);
  }
  for (const auto& w : d.weights) {
    for (const auto& row : w.rows) {
      if (!row.empty()) h = fnv1a64(row.data(), row.size() * sizeof(row[0]), h);
    }
  }
  return hash_hex(h);
}

}  // namespace detail

/**
 * Adaptive MCMC for the aggregated model.
 *
 * One iteration is a joint MALA move on (beta, Gamma) followed by a joint
 * random-walk move on (log sigma, log phi, log theta) with the field
 * recomputed from the held innovations (whitened parameterization; identity
 * preconditioning over Gamma, while beta coordinates carry a fixed diagonal
 * scale from the Fisher information at the initial state). Step sizes adapt
 * by Robbins-Monro toward 0.574 / 0.234 during burn-in and freeze after.
 *
 * In augmented mode each iteration first reallocates every reporting
 * facility-month count to cells (multinomial step) and the MALA move targets
 * the cell-level Poisson likelihood with missing-adjusted offsets. The
 * marginal facility likelihood is the default inference path; the two agree
 * by Poisson thinning/superposition.
 */
class ChainRunner {
 public:
  ChainRunner(const LgcpData& data, const ChainConfig& config)
      : d_(data),
        cfg_(config),
        fm_(data.window, static_cast<int>(data.months.size()), config.init_sigma,
            config.init_phi, config.init_theta, config.ext_factor,
            config.allow_spectrum_clamp),
        rng_(Rng::stream(config.seed, 0x636861696eull)) {
    cfg_.validate();
    d_.validate();
    n_ = d_.n_cells();
    T_ = d_.n_months();
    next_ = fm_.ext_size();
    win2ext_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) win2ext_[i] = fm_.ext_index_of_window_cell(i);
    if (cfg_.augmented) {
      offsets_star_ = adjust_offsets_for_missing(d_.offsets, d_.weights, d_.panel);
      x_counts_.assign(n_ * T_, 0.0);
    }
    initialize();
  }

  PosteriorSamples run(const std::function<void(const SampleView&)>& on_sample = nullptr) {
    PosteriorSamples out;
    out.window = d_.window;
    out.months = d_.months;
    out.covariate_names = d_.covariate_names;
    out.data_hash = detail::hash_lgcp_data(d_);
    const std::string cfg_dump = cfg_.to_json().dump();
    out.config_hash = hash_hex(fnv1a64(cfg_dump.data(), cfg_dump.size()));
    out.seed = cfg_.seed;
    out.block_id = cfg_.block_id;

    for (; iter_ < cfg_.iterations; ++iter_) {
      if (cfg_.augmented) refresh_augmentation();
      mala_step();
      if (cfg_.update_hypers) hyper_step();
      if (iter_ >= cfg_.burnin && (iter_ - cfg_.burnin) % cfg_.thin == cfg_.thin - 1) {
        record(out, on_sample);
      }
    }
    out.mala_acceptance = mala_accepts_ / std::max(1.0, mala_trials_);
    out.hyper_acceptance = hyper_accepts_ / std::max(1.0, hyper_trials_);
    out.nonfinite_rejects = nonfinite_rejects_;
    out.final_mala_step = mala_step_;
    out.final_hyper_step = hyper_step_;
    return out;
  }

  // -- exposed for targeted tests --
  double mala_step_size() const { return mala_step_; }
  void set_mala_step_size(double s) { mala_step_ = s; }
  void set_hyper_step_size(double s) { hyper_step_ = s; }
  const std::vector<double>& beta() const { return beta_; }
  const std::vector<double>& gamma() const { return gamma_; }
  double sigma() const { return fm_.sigma(); }
  double phi() const { return fm_.phi(); }
  double theta() const { return fm_.theta(); }
  double log_posterior() const { return cache_.log_posterior; }
  long nonfinite_rejects() const { return nonfinite_rejects_; }
  void disable_adaptation() { adapt_ = false; }

  /// One MALA move on (beta, Gamma). With a zero step size the proposal is
  /// the current state and the chain never moves.
  bool mala_step() {
    const double eps = mala_step_;
    double alpha = 0.0;
    bool accepted = false;
    if (eps > 0.0) {
      prop_beta_.resize(beta_.size());
      prop_gamma_.resize(gamma_.size());
      for (std::size_t k = 0; k < beta_.size(); ++k) {
        prop_beta_[k] = beta_[k] +
                        0.5 * eps * eps * mass_beta_[k] * mass_beta_[k] * grad_beta_[k] +
                        eps * mass_beta_[k] * rng_.normal();
      }
      for (std::size_t i = 0; i < gamma_.size(); ++i) {
        prop_gamma_[i] = gamma_[i] + 0.5 * eps * eps * grad_gamma_[i] + eps * rng_.normal();
      }
      const double u_accept = rng_.uniform();
      const double lp_prop = evaluate_with_model(fm_, prop_beta_, prop_gamma_, prop_cache_);
      if (std::isfinite(lp_prop)) {
        gradient(prop_cache_, prop_beta_, prop_gamma_, prop_grad_beta_, prop_grad_gamma_);
        const double log_q_fwd = proposal_logdensity(beta_, gamma_, grad_beta_, grad_gamma_,
                                                     prop_beta_, prop_gamma_, eps);
        const double log_q_rev = proposal_logdensity(prop_beta_, prop_gamma_, prop_grad_beta_,
                                                     prop_grad_gamma_, beta_, gamma_, eps);
        const double log_ratio = lp_prop - cache_.log_posterior + log_q_rev - log_q_fwd;
        if (std::isfinite(log_ratio)) {
          alpha = std::exp(std::min(0.0, log_ratio));
          if (u_accept < alpha) {
            accepted = true;
            beta_.swap(prop_beta_);
            gamma_.swap(prop_gamma_);
            std::swap(cache_, prop_cache_);
            grad_beta_.swap(prop_grad_beta_);
            grad_gamma_.swap(prop_grad_gamma_);
          }
        } else {
          ++nonfinite_rejects_;
        }
      } else {
        ++nonfinite_rejects_;
      }
    }
    mala_trials_ += 1.0;
    if (accepted) mala_accepts_ += 1.0;
    if (adapt_ && iter_ < cfg_.burnin && eps > 0.0) {
      const double gain = adapt_scale_ / std::pow(static_cast<double>(iter_) + 1.0, 0.6);
      mala_step_ = std::exp(std::log(mala_step_) + gain * (alpha - cfg_.mala_target));
    }
    return accepted;
  }

  /// One symmetric random-walk move on (log sigma, log phi, log theta); the
  /// forward and reverse proposal densities cancel. The field is recomputed
  /// from the held innovations; a proposal whose embedding spectrum turns
  /// negative is rejected outright.
  bool hyper_step() {
    const double eta = hyper_step_;
    const double ls = std::log(fm_.sigma()) + eta * rng_.normal();
    const double lp = std::log(fm_.phi()) + eta * rng_.normal();
    const double lt = std::log(fm_.theta()) + eta * rng_.normal();
    const double u_accept = rng_.uniform();
    double alpha = 0.0;
    bool accepted = false;

    FieldModel proposal_fm = fm_;
    bool spectrum_ok = true;
    proposal_fm.set_sigma(std::exp(ls));
    proposal_fm.set_theta(std::exp(lt));
    try {
      proposal_fm.set_phi(std::exp(lp), cfg_.allow_spectrum_clamp);
    } catch (const Error&) {
      spectrum_ok = false;
    }
    if (spectrum_ok) {
      const double lp_prop = evaluate_with_model(proposal_fm, beta_, gamma_, prop_cache_);
      const double prior_cur = cfg_.priors.log_density(fm_.sigma(), fm_.phi(), fm_.theta());
      const double prior_prop =
          cfg_.priors.log_density(proposal_fm.sigma(), proposal_fm.phi(), proposal_fm.theta());
      const double log_ratio = (lp_prop + prior_prop) - (cache_.log_posterior + prior_cur);
      if (std::isfinite(log_ratio)) {
        alpha = std::exp(std::min(0.0, log_ratio));
        if (u_accept < alpha) {
          accepted = true;
          fm_ = std::move(proposal_fm);
          std::swap(cache_, prop_cache_);
          gradient(cache_, beta_, gamma_, grad_beta_, grad_gamma_);
        }
      } else {
        ++nonfinite_rejects_;
      }
    } else {
      ++nonfinite_rejects_;
    }
    hyper_trials_ += 1.0;
    if (accepted) hyper_accepts_ += 1.0;
    if (adapt_ && iter_ < cfg_.burnin) {
      const double gain = adapt_scale_ / std::pow(static_cast<double>(iter_) + 1.0, 0.6);
      hyper_step_ = std::exp(std::log(hyper_step_) + gain * (alpha - cfg_.hyper_target));
    }
    return accepted;
  }

  // -- checkpoint/restart --

  nlohmann::json checkpoint() const {
    nlohmann::json j;
    j["iter"] = iter_;
    j["beta"] = beta_;
    j["sigma"] = fm_.sigma();
    j["phi"] = fm_.phi();
    j["theta"] = fm_.theta();
    j["mala_step"] = mala_step_;
    j["hyper_step"] = hyper_step_;
    j["mala_accepts"] = mala_accepts_;
    j["mala_trials"] = mala_trials_;
    j["hyper_accepts"] = hyper_accepts_;
    j["hyper_trials"] = hyper_trials_;
    j["nonfinite_rejects"] = nonfinite_rejects_;
    j["rng"] = rng_.state_words();
    j["gamma"] = gamma_;
    j["data_hash"] = detail::hash_lgcp_data(d_);
    j["grid"] = {d_.window.ncols, d_.window.nrows, d_.window.x_origin, d_.window.y_origin,
                 d_.window.cell_size};
    return j;
  }

  /// Restores a checkpoint; grid and data hashes must match the inputs this
  /// runner was built from.
  void restore(const nlohmann::json& j) {
    require(j.at("data_hash").get<std::string>() == detail::hash_lgcp_data(d_), "hash_mismatch",
            "checkpoint was produced from different data");
    const auto g = j.at("grid");
    const GridSpec saved{g.at(0).get<int>(), g.at(1).get<int>(), g.at(2).get<double>(),
                         g.at(3).get<double>(), g.at(4).get<double>()};
    require(saved == d_.window, "hash_mismatch", "checkpoint grid does not match");
    iter_ = j.at("iter").get<long>();
    beta_ = j.at("beta").get<std::vector<double>>();
    fm_.set_sigma(j.at("sigma").get<double>());
    fm_.set_theta(j.at("theta").get<double>());
    fm_.set_phi(j.at("phi").get<double>(), cfg_.allow_spectrum_clamp);
    mala_step_ = j.at("mala_step").get<double>();
    hyper_step_ = j.at("hyper_step").get<double>();
    mala_accepts_ = j.at("mala_accepts").get<double>();
    mala_trials_ = j.at("mala_trials").get<double>();
    hyper_accepts_ = j.at("hyper_accepts").get<double>();
    hyper_trials_ = j.at("hyper_trials").get<double>();
    nonfinite_rejects_ = j.at("nonfinite_rejects").get<long>();
    rng_.set_state_words(j.at("rng").get<std::array<std::uint64_t, 6>>());
    gamma_ = j.at("gamma").get<std::vector<double>>();
    const double lp = evaluate_with_model(fm_, beta_, gamma_, cache_);
    require(std::isfinite(lp), "bad_params", "restored state has non-finite posterior");
    gradient(cache_, beta_, gamma_, grad_beta_, grad_gamma_);
  }

 private:
  using Cache = PosteriorPoint;

  void initialize() {
    beta_.assign(d_.n_cov(), 0.0);
    gamma_.assign(next_ * T_, 0.0);

    // Intercept start and beta scales from a marginal pass at the prior-mean
    // field (Gamma = 0 => Y = -sigma^2/2 everywhere).
    std::vector<double> ywin0(n_ * T_, -0.5 * fm_.sigma() * fm_.sigma());
    LikelihoodWorkspace ws0;
    (void)marginal_loglik(d_, beta_, ywin0, ws0, cfg_.threads);
    double sum_y = 0.0, sum_mu = 0.0;
    for (std::size_t t = 0; t < T_; ++t) {
      for (std::size_t j = 0; j < d_.n_facilities(); ++j) {
        if (d_.panel.is_missing(j, t)) continue;
        sum_y += d_.panel.y(j, t);
        sum_mu += ws0.mu[t * d_.n_facilities() + j];
      }
    }
    if (sum_y > 0.0 && sum_mu > 0.0) beta_[0] = std::log(sum_y / sum_mu);
    (void)marginal_loglik(d_, beta_, ywin0, ws0, cfg_.threads);
    compute_beta_mass(ws0);

    const double lp0 = evaluate_with_model(fm_, beta_, gamma_, cache_);
    require(std::isfinite(lp0), "bad_params", "initial state has non-finite posterior");
    gradient(cache_, beta_, gamma_, grad_beta_, grad_gamma_);
    mala_step_ = cfg_.init_mala_step;
    hyper_step_ = cfg_.init_hyper_step;
  }

  /// Fixed diagonal scale per beta coordinate from the Poisson Fisher
  /// information at the initial state, so intercept-size and covariate-size
  /// moves are commensurate under one global step size.
  void compute_beta_mass(const LikelihoodWorkspace& ws) {
    const std::size_t m = d_.n_facilities();
    std::vector<double> info(d_.n_cov(), 0.0);
    std::vector<double> zbar(d_.n_cov());
    for (std::size_t t = 0; t < T_; ++t) {
      const double* lambda = ws.lambda.data() + t * n_;
      const double* mu = ws.mu.data() + t * m;
      const auto cols = d_.weights[t].columns();
      for (std::size_t j = 0; j < m; ++j) {
        if (d_.panel.is_missing(j, t) || mu[j] <= 0.0) continue;
        std::fill(zbar.begin(), zbar.end(), 0.0);
        for (const auto& [cell, w] : cols[j]) {
          const double lw = w * lambda[cell];
          for (std::size_t k = 0; k < d_.n_cov(); ++k) {
            zbar[k] += lw * d_.design[k][t][static_cast<std::size_t>(cell)];
          }
        }
        for (std::size_t k = 0; k < d_.n_cov(); ++k) {
          const double zb = zbar[k] / mu[j];
          info[k] += mu[j] * zb * zb;
        }
      }
    }
    mass_beta_.resize(d_.n_cov());
    const double prior_info = 1.0 / (cfg_.priors.beta_sd * cfg_.priors.beta_sd);
    for (std::size_t k = 0; k < d_.n_cov(); ++k) {
      mass_beta_[k] = std::min(1.0, 1.0 / std::sqrt(info[k] + prior_info));
    }
  }

  double evaluate_with_model(const FieldModel& fm, const std::vector<double>& beta,
                             const std::vector<double>& gamma, Cache& cache) {
    if (!cfg_.augmented) {
      evaluate_log_posterior(d_, fm, cfg_.priors, beta, gamma, /*with_gradient=*/false, cache,
                             cfg_.threads);
      return cache.log_posterior;
    }
    fm.innovations_to_u(gamma, cache.u, cfg_.threads);
    fm.u_to_v(cache.u, cache.v);
    cache.ywin.resize(n_ * T_);
    for (std::size_t t = 0; t < T_; ++t) {
      const double* v = cache.v.data() + t * next_;
      double* y = cache.ywin.data() + t * n_;
      for (std::size_t i = 0; i < n_; ++i) y[i] = fm.field_value(v[win2ext_[i]]);
    }
    cache.loglik =
        augmented_loglik(d_, beta, cache.ywin, x_counts_, offsets_star_, cache.ws, cfg_.threads);
    double prior = 0.0;
    const double bsd2 = cfg_.priors.beta_sd * cfg_.priors.beta_sd;
    for (double b : beta) prior -= 0.5 * b * b / bsd2;
    std::vector<double> g2(gamma.size());
    for (std::size_t i = 0; i < gamma.size(); ++i) g2[i] = gamma[i] * gamma[i];
    prior -= 0.5 * pairwise_sum(g2);
    cache.log_posterior = cache.loglik + prior;
    return cache.log_posterior;
  }

  /// Gradient of the log posterior at (at_beta, at_gamma) whose likelihood
  /// intermediates are already in `cache`.
  void gradient(const Cache& cache, const std::vector<double>& at_beta,
                const std::vector<double>& at_gamma, std::vector<double>& gbeta,
                std::vector<double>& ggamma) {
    std::vector<double> grad_y_win;
    if (cfg_.augmented) {
      augmented_gradient(d_, cache.ws, x_counts_, offsets_star_, gbeta, grad_y_win,
                         cfg_.threads);
    } else {
      marginal_gradient(d_, cache.ws, gbeta, grad_y_win, cfg_.threads);
    }
    const double bsd2 = cfg_.priors.beta_sd * cfg_.priors.beta_sd;
    for (std::size_t k = 0; k < gbeta.size(); ++k) gbeta[k] -= at_beta[k] / bsd2;
    detail::pull_back_to_innovations(fm_, n_, T_, grad_y_win, ggamma, cfg_.threads);
    for (std::size_t i = 0; i < ggamma.size(); ++i) ggamma[i] -= at_gamma[i];
  }

  double proposal_logdensity(const std::vector<double>& from_beta,
                             const std::vector<double>& from_gamma,
                             const std::vector<double>& gbeta, const std::vector<double>& ggamma,
                             const std::vector<double>& to_beta,
                             const std::vector<double>& to_gamma, double eps) const {
    // density of (to | from) in the whitened metric, constants dropped
    double acc = 0.0;
    for (std::size_t k = 0; k < to_beta.size(); ++k) {
      const double dev =
          (to_beta[k] - from_beta[k]) / mass_beta_[k] - 0.5 * eps * eps * mass_beta_[k] * gbeta[k];
      acc += dev * dev;
    }
    std::vector<double> devs(to_gamma.size());
    for (std::size_t i = 0; i < to_gamma.size(); ++i) {
      const double dev = to_gamma[i] - from_gamma[i] - 0.5 * eps * eps * ggamma[i];
      devs[i] = dev * dev;
    }
    acc += pairwise_sum(devs);
    return -acc / (2.0 * eps * eps);
  }

  void refresh_augmentation() {
    x_counts_ = draw_augmented_counts(d_, cache_.ws, rng_);
    const double lp = evaluate_with_model(fm_, beta_, gamma_, cache_);
    require(std::isfinite(lp), "bad_params", "augmented state has non-finite posterior");
    gradient(cache_, beta_, gamma_, grad_beta_, grad_gamma_);
  }

  void record(PosteriorSamples& out, const std::function<void(const SampleView&)>& on_sample) {
    const double full_logpost =
        cache_.log_posterior + cfg_.priors.log_density(fm_.sigma(), fm_.phi(), fm_.theta());
    out.beta.push_back(beta_);
    out.sigma.push_back(fm_.sigma());
    out.phi.push_back(fm_.phi());
    out.theta.push_back(fm_.theta());
    out.logpost.push_back(full_logpost);
    if (cfg_.record_fields) out.fields.push_back(cache_.ywin);
    if (on_sample) {
      on_sample(
          SampleView{beta_, fm_.sigma(), fm_.phi(), fm_.theta(), full_logpost, cache_.ywin});
    }
  }

  const LgcpData& d_;
  ChainConfig cfg_;
  FieldModel fm_;
  Rng rng_;
  std::size_t n_ = 0, T_ = 0, next_ = 0;
  std::vector<std::size_t> win2ext_;

  std::vector<double> beta_, gamma_;
  std::vector<double> grad_beta_, grad_gamma_;
  std::vector<double> mass_beta_;
  Cache cache_, prop_cache_;
  std::vector<double> prop_beta_, prop_gamma_, prop_grad_beta_, prop_grad_gamma_;

  std::vector<std::vector<double>> offsets_star_;
  std::vector<double> x_counts_;

  long iter_ = 0;
  double mala_step_ = 0.05, hyper_step_ = 0.15;
  double mala_accepts_ = 0.0, mala_trials_ = 0.0;
  double hyper_accepts_ = 0.0, hyper_trials_ = 0.0;
  long nonfinite_rejects_ = 0;
  bool adapt_ = true;
  double adapt_scale_ = 1.0;
};

inline PosteriorSamples run_chain(
    const LgcpData& data, const ChainConfig& config,
    const std::function<void(const SampleView&)>& on_sample = nullptr) {
  ChainRunner runner(data, config);
  return runner.run(on_sample);
}

// ---- sample persistence: a JSON index, a params CSV and one flat binary ----
// ---- file of little-endian float64 field slices per retained draw       ----

inline void PosteriorSamples::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json index;
  index["n_samples"] = size();
  index["grid"] = {{"ncols", window.ncols},
                   {"nrows", window.nrows},
                   {"x_origin", window.x_origin},
                   {"y_origin", window.y_origin},
                   {"cell_size", window.cell_size}};
  index["months"] = months;
  index["covariates"] = covariate_names;
  index["byte_order"] = "little";
  index["dtype"] = "float64";
  index["params_file"] = "params.csv";
  index["fields_file"] = fields.empty() ? "" : "fields.bin";
  index["provenance"] = {{"data_hash", data_hash},
                         {"config_hash", config_hash},
                         {"seed", seed},
                         {"block_id", block_id}};
  index["diagnostics"] = {{"mala_acceptance", mala_acceptance},
                          {"hyper_acceptance", hyper_acceptance},
                          {"nonfinite_rejects", nonfinite_rejects},
                          {"final_mala_step", final_mala_step},
                          {"final_hyper_step", final_hyper_step}};
  write_file_text(dir + "/index.json", index.dump(2) + "\n");

  std::ostringstream csv;
  csv << "draw";
  for (const auto& name : covariate_names) csv << ",beta_" << name;
  csv << ",sigma,phi,theta,logpost\n";
  char buf[40];
  for (std::size_t s = 0; s < size(); ++s) {
    csv << s;
    for (double b : beta[s]) {
      std::snprintf(buf, sizeof buf, "%.17g", b);
      csv << ',' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", sigma[s]);
    csv << ',' << buf;
    std::snprintf(buf, sizeof buf, "%.17g", phi[s]);
    csv << ',' << buf;
    std::snprintf(buf, sizeof buf, "%.17g", theta[s]);
    csv << ',' << buf;
    std::snprintf(buf, sizeof buf, "%.17g", logpost[s]);
    csv << ',' << buf << '\n';
  }
  write_file_text(dir + "/params.csv", csv.str());

  if (!fields.empty()) {
    std::ofstream bin(dir + "/fields.bin", std::ios::binary);
    require(static_cast<bool>(bin), "io_error", "cannot write " + dir + "/fields.bin");
    for (const auto& f : fields) {
      bin.write(reinterpret_cast<const char*>(f.data()),
                static_cast<std::streamsize>(f.size() * sizeof(double)));
    }
  }
}

inline PosteriorSamples PosteriorSamples::load(const std::string& dir) {
  const auto index = nlohmann::json::parse(read_file_text(dir + "/index.json"));
  PosteriorSamples out;
  const auto& g = index.at("grid");
  out.window = GridSpec{g.at("ncols").get<int>(), g.at("nrows").get<int>(),
                        g.at("x_origin").get<double>(), g.at("y_origin").get<double>(),
                        g.at("cell_size").get<double>()};
  out.months = index.at("months").get<std::vector<int>>();
  out.covariate_names = index.at("covariates").get<std::vector<std::string>>();
  out.data_hash = index.at("provenance").at("data_hash").get<std::string>();
  out.config_hash = index.at("provenance").at("config_hash").get<std::string>();
  out.seed = index.at("provenance").at("seed").get<std::uint64_t>();
  out.block_id = index.at("provenance").at("block_id").get<std::string>();
  out.mala_acceptance = index.at("diagnostics").at("mala_acceptance").get<double>();
  out.hyper_acceptance = index.at("diagnostics").at("hyper_acceptance").get<double>();

  std::istringstream csv(read_file_text(dir + "/params.csv"));
  std::string line;
  require(static_cast<bool>(std::getline(csv, line)), "parse_error", "params.csv is empty");
  const std::size_t n_cov = out.covariate_names.size();
  while (std::getline(csv, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    require(f.size() == n_cov + 5, "parse_error", "params.csv column count mismatch");
    std::vector<double> b(n_cov);
    for (std::size_t k = 0; k < n_cov; ++k) b[k] = std::stod(f[1 + k]);
    out.beta.push_back(std::move(b));
    out.sigma.push_back(std::stod(f[1 + n_cov]));
    out.phi.push_back(std::stod(f[2 + n_cov]));
    out.theta.push_back(std::stod(f[3 + n_cov]));
    out.logpost.push_back(std::stod(f[4 + n_cov]));
  }

  const std::string fields_file = index.at("fields_file").get<std::string>();
  if (!fields_file.empty()) {
    const std::size_t slice = out.window.size() * out.months.size();
    std::ifstream bin(dir + "/" + fields_file, std::ios::binary);
    require(static_cast<bool>(bin), "missing_input", "cannot open " + fields_file);
    for (std::size_t s = 0; s < out.sigma.size(); ++s) {
      std::vector<double> f(slice);
      bin.read(reinterpret_cast<char*>(f.data()),
               static_cast<std::streamsize>(slice * sizeof(double)));
      require(static_cast<bool>(bin), "parse_error", "fields.bin truncated");
      out.fields.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace algcp
