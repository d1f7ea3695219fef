#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <json.hpp>

#include "algcp/grid.hpp"
#include "algcp/rng.hpp"

namespace algcp {

/// One survey record for the treatment-seeking model.
struct SeekObservation {
  std::size_t cell = 0;   // cell index on the coarse spatial grid
  int month = 0;
  bool sought = false;
  double travel_cost = 0.0;  // generalized minutes

  void validate(int n_months) const {
    require(travel_cost >= 0.0 && std::isfinite(travel_cost), "bad_value",
            "travel cost must be finite and non-negative");
    require(month >= 0 && month < n_months, "bad_value", "observation month out of range");
  }
};

/**
 * logit(theta(s,t)) = beta0 + beta1 r(s,t) + f1(s) + f2(t)
 *
 * f1 is a spatial field on a coarse grid with exponential correlation of
 * variance sigma2_s and range ell_s (read as the correlation scale
 * parameter; the published "nominal range" is not defined further). f2 is
 * a Gaussian random walk over months with innovation variance sigma2_t,
 * anchored at f2[0] = 0 so the intercept stays identified.
 */
struct TreatmentSeekingParams {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double sigma2_s = 1.0;
  double ell_s = 0.5;
  double sigma2_t = 0.25;
  GridSpec coarse_spec;
  std::vector<double> f1;  // per coarse cell
  std::vector<double> f2;  // per month, f2[0] = 0

  nlohmann::json to_json() const {
    return {{"beta0", beta0},
            {"beta1", beta1},
            {"sigma2_s", sigma2_s},
            {"ell_s", ell_s},
            {"sigma2_t", sigma2_t},
            {"coarse_grid",
             {coarse_spec.ncols, coarse_spec.nrows, coarse_spec.x_origin, coarse_spec.y_origin,
              coarse_spec.cell_size}},
            {"f1", f1},
            {"f2", f2}};
  }
  static TreatmentSeekingParams from_json(const nlohmann::json& j) {
    TreatmentSeekingParams p;
    p.beta0 = j.at("beta0").get<double>();
    p.beta1 = j.at("beta1").get<double>();
    p.sigma2_s = j.at("sigma2_s").get<double>();
    p.ell_s = j.at("ell_s").get<double>();
    p.sigma2_t = j.at("sigma2_t").get<double>();
    const auto& g = j.at("coarse_grid");
    p.coarse_spec = GridSpec{g.at(0).get<int>(), g.at(1).get<int>(), g.at(2).get<double>(),
                             g.at(3).get<double>(), g.at(4).get<double>()};
    p.f1 = j.at("f1").get<std::vector<double>>();
    p.f2 = j.at("f2").get<std::vector<double>>();
    return p;
  }
};

struct SeekingFitOptions {
  double beta_prior_sd = 100.0;
  bool optimize_hypers = true;  // Laplace-marginal Nelder-Mead over the three variances
  int max_newton_iterations = 100;
  bool mcmc = false;  // random-walk MH over the whitened joint instead of MAP+Laplace
  long mcmc_iterations = 40000;
  long mcmc_burnin = 10000;
  long mcmc_thin = 20;
  std::uint64_t seed = 1;
};

struct SeekingFit {
  TreatmentSeekingParams params;
  double beta0_sd = 0.0, beta1_sd = 0.0;
  std::array<double, 2> beta0_ci95{}, beta1_ci95{};
  double max_abs_gradient = 0.0;  // at the MAP, for diagnostics
  std::vector<double> beta1_draws;  // mcmc mode only
};

namespace detail {

inline Eigen::MatrixXd seeking_prior_precision_spatial(const GridSpec& coarse, double sigma2_s,
                                                       double ell_s) {
  const std::size_t nc = coarse.size();
  Eigen::MatrixXd cov(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nc));
  for (std::size_t a = 0; a < nc; ++a) {
    const double xa = coarse.cell_center_x(coarse.col_of_index(a));
    const double ya = coarse.cell_center_y(coarse.row_of_index(a));
    for (std::size_t b = 0; b <= a; ++b) {
      const double xb = coarse.cell_center_x(coarse.col_of_index(b));
      const double yb = coarse.cell_center_y(coarse.row_of_index(b));
      const double d = std::hypot(xa - xb, ya - yb);
      const double c = sigma2_s * std::exp(-d / ell_s);
      cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = c;
      cov(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = c;
    }
  }
  // jitter for numerical positive-definiteness
  for (Eigen::Index i = 0; i < cov.rows(); ++i) cov(i, i) += 1e-10 * sigma2_s;
  return cov.llt().solve(
      Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nc)));
}

struct SeekingDesign {
  std::size_t nc = 0;  // coarse cells
  int T = 0;           // months
  std::size_t dim() const { return 2 + nc + static_cast<std::size_t>(T - 1); }
  // state layout: [beta0, beta1, f1 (nc), f2[1..T-1]]
};

inline double seeking_eta(const std::vector<double>& x, const SeekObservation& o,
                          const SeekingDesign& dz) {
  double eta = x[0] + x[1] * o.travel_cost + x[2 + o.cell];
  if (o.month > 0) eta += x[2 + dz.nc + static_cast<std::size_t>(o.month - 1)];
  return eta;
}

}  // namespace detail

/**
 * MAP + Laplace fit of the treatment-seeking model (random-walk MH over the
 * whitened joint behind the mcmc flag). The latent problem given the three
 * variances is strictly convex, so damped Newton converges reliably; the
 * variances themselves are optimized by Nelder-Mead on the Laplace marginal
 * when requested. Near-certain separation (a fitted |beta| running away)
 * is reported as an error suggesting stronger priors.
 */
inline SeekingFit fit_treatment_seeking(const std::vector<SeekObservation>& obs,
                                        const GridSpec& coarse_spec, int n_months,
                                        const SeekingFitOptions& options = {}) {
  require(!obs.empty(), "bad_params", "no observations");
  bool any_true = false, any_false = false;
  for (const auto& o : obs) {
    o.validate(n_months);
    require(o.cell < coarse_spec.size(), "off_grid", "observation cell outside the coarse grid");
    (o.sought ? any_true : any_false) = true;
  }
  require(any_true && any_false, "bad_params",
          "both outcomes must be present to fit the seeking model");

  detail::SeekingDesign dz{coarse_spec.size(), n_months};
  const std::size_t dim = dz.dim();

  double s2s = 1.0, ells = 0.5, s2t = 0.25;

  // Newton solve at fixed hyperparameters; returns (x, H llt, logdet H, objective)
  struct NewtonResult {
    Eigen::VectorXd x;
    Eigen::MatrixXd hess;
    double neg_logpost = 0.0;
    double max_abs_grad = 0.0;
  };
  auto newton = [&](double sigma2_s, double ell_s, double sigma2_t) {
    const Eigen::MatrixXd qs =
        detail::seeking_prior_precision_spatial(coarse_spec, sigma2_s, ell_s);
    const double bprec = 1.0 / (options.beta_prior_sd * options.beta_prior_sd);
    auto neg_logpost = [&](const Eigen::VectorXd& x) {
      double nll = 0.0;
      std::vector<double> xs(x.data(), x.data() + x.size());
      for (const auto& o : obs) {
        const double eta = detail::seeking_eta(xs, o, dz);
        nll += std::log1p(std::exp(-std::fabs(eta))) + std::max(eta, 0.0) -
               (o.sought ? eta : 0.0);
      }
      const Eigen::VectorXd f1 = x.segment(2, static_cast<Eigen::Index>(dz.nc));
      nll += 0.5 * f1.dot(qs * f1);
      double prev = 0.0;
      for (int t = 1; t < dz.T; ++t) {
        const double cur = x(2 + static_cast<Eigen::Index>(dz.nc) + t - 1);
        nll += 0.5 * (cur - prev) * (cur - prev) / sigma2_t;
        prev = cur;
      }
      nll += 0.5 * bprec * (x(0) * x(0) + x(1) * x(1));
      return nll;
    };

    NewtonResult res;
    res.x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    double obj = neg_logpost(res.x);
    for (int it = 0; it < options.max_newton_iterations; ++it) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                                   static_cast<Eigen::Index>(dim));
      std::vector<double> xs(res.x.data(), res.x.data() + res.x.size());
      for (const auto& o : obs) {
        const double eta = detail::seeking_eta(xs, o, dz);
        const double p = 1.0 / (1.0 + std::exp(-eta));
        const double w = p * (1.0 - p);
        const double r = p - (o.sought ? 1.0 : 0.0);
        std::array<Eigen::Index, 4> idx{0, 1, static_cast<Eigen::Index>(2 + o.cell), -1};
        std::array<double, 4> val{1.0, o.travel_cost, 1.0, 0.0};
        int nnz = 3;
        if (o.month > 0) {
          idx[3] = static_cast<Eigen::Index>(2 + dz.nc) + o.month - 1;
          val[3] = 1.0;
          nnz = 4;
        }
        for (int a = 0; a < nnz; ++a) {
          grad(idx[static_cast<std::size_t>(a)]) += r * val[static_cast<std::size_t>(a)];
          for (int b = 0; b < nnz; ++b) {
            hess(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]) +=
                w * val[static_cast<std::size_t>(a)] * val[static_cast<std::size_t>(b)];
          }
        }
      }
      grad.segment(2, static_cast<Eigen::Index>(dz.nc)) +=
          qs * res.x.segment(2, static_cast<Eigen::Index>(dz.nc));
      hess.block(2, 2, static_cast<Eigen::Index>(dz.nc), static_cast<Eigen::Index>(dz.nc)) += qs;
      // random-walk tridiagonal precision on f2
      for (int t = 1; t < dz.T; ++t) {
        const Eigen::Index cur = 2 + static_cast<Eigen::Index>(dz.nc) + t - 1;
        const double prev_val = (t == 1) ? 0.0 : res.x(cur - 1);
        grad(cur) += (res.x(cur) - prev_val) / sigma2_t;
        hess(cur, cur) += 1.0 / sigma2_t;
        if (t > 1) {
          grad(cur - 1) -= (res.x(cur) - prev_val) / sigma2_t;
          hess(cur, cur - 1) -= 1.0 / sigma2_t;
          hess(cur - 1, cur) -= 1.0 / sigma2_t;
          hess(cur - 1, cur - 1) += 1.0 / sigma2_t;
        }
      }
      grad(0) += bprec * res.x(0);
      grad(1) += bprec * res.x(1);
      hess(0, 0) += bprec;
      hess(1, 1) += bprec;

      const Eigen::VectorXd step = hess.ldlt().solve(grad);
      double scale = 1.0;
      Eigen::VectorXd trial;
      double trial_obj = 0.0;
      for (int half = 0; half < 30; ++half) {
        trial = res.x - scale * step;
        trial_obj = neg_logpost(trial);
        if (trial_obj <= obj + 1e-12) break;
        scale *= 0.5;
      }
      const double change = (res.x - trial).cwiseAbs().maxCoeff();
      res.x = trial;
      obj = trial_obj;
      res.max_abs_grad = grad.cwiseAbs().maxCoeff();
      res.hess = hess;
      if (change < 1e-10 && res.max_abs_grad < 1e-7 * (1.0 + std::fabs(obj))) break;
    }
    res.neg_logpost = obj;
    return res;
  };

  auto laplace_marginal = [&](double ls2s, double lells, double ls2t) {
    const double sigma2_s = std::exp(ls2s), ell_s = std::exp(lells), sigma2_t = std::exp(ls2t);
    const NewtonResult r = newton(sigma2_s, ell_s, sigma2_t);
    // log p(y | hypers) ~ -negpost(x*) + 0.5 log|Q| - 0.5 log|H|
    const Eigen::MatrixXd qs =
        detail::seeking_prior_precision_spatial(coarse_spec, sigma2_s, ell_s);
    double logdet_q = 0.0;
    {
      const Eigen::LLT<Eigen::MatrixXd> llt(qs);
      for (Eigen::Index i = 0; i < qs.rows(); ++i) {
        logdet_q += 2.0 * std::log(llt.matrixL()(i, i));
      }
      logdet_q += -static_cast<double>(dz.T - 1) * std::log(sigma2_t);
    }
    double logdet_h = 0.0;
    {
      const Eigen::LLT<Eigen::MatrixXd> llt(r.hess);
      for (Eigen::Index i = 0; i < r.hess.rows(); ++i) {
        logdet_h += 2.0 * std::log(llt.matrixL()(i, i));
      }
    }
    return -r.neg_logpost + 0.5 * logdet_q - 0.5 * logdet_h;
  };

  if (options.optimize_hypers && !options.mcmc) {
    // Nelder-Mead on the 3-D log-variance space
    using Point = std::array<double, 3>;
    auto value = [&](const Point& p) { return -laplace_marginal(p[0], p[1], p[2]); };
    std::vector<std::pair<double, Point>> simplex;
    const Point start{std::log(s2s), std::log(ells), std::log(s2t)};
    simplex.push_back({value(start), start});
    for (int k = 0; k < 3; ++k) {
      Point p = start;
      p[static_cast<std::size_t>(k)] += 0.7;
      simplex.push_back({value(p), p});
    }
    for (int iter = 0; iter < 60; ++iter) {
      std::sort(simplex.begin(), simplex.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (simplex.back().first - simplex.front().first < 1e-4) break;
      Point centroid{0, 0, 0};
      for (int k = 0; k < 3; ++k) {
        for (int c = 0; c < 3; ++c) {
          centroid[static_cast<std::size_t>(c)] +=
              simplex[static_cast<std::size_t>(k)].second[static_cast<std::size_t>(c)] / 3.0;
        }
      }
      auto combine = [&](double coef) {
        Point p;
        for (int c = 0; c < 3; ++c) {
          p[static_cast<std::size_t>(c)] =
              centroid[static_cast<std::size_t>(c)] +
              coef * (simplex[3].second[static_cast<std::size_t>(c)] -
                      centroid[static_cast<std::size_t>(c)]);
        }
        return p;
      };
      const Point refl = combine(-1.0);
      const double frefl = value(refl);
      if (frefl < simplex[0].first) {
        const Point expd = combine(-2.0);
        const double fexp = value(expd);
        simplex[3] = fexp < frefl ? std::make_pair(fexp, expd) : std::make_pair(frefl, refl);
      } else if (frefl < simplex[2].first) {
        simplex[3] = {frefl, refl};
      } else {
        const Point contr = combine(0.5);
        const double fcon = value(contr);
        if (fcon < simplex[3].first) {
          simplex[3] = {fcon, contr};
        } else {
          for (int k = 1; k < 4; ++k) {
            for (int c = 0; c < 3; ++c) {
              simplex[static_cast<std::size_t>(k)].second[static_cast<std::size_t>(c)] =
                  0.5 * (simplex[static_cast<std::size_t>(k)].second[static_cast<std::size_t>(c)] +
                         simplex[0].second[static_cast<std::size_t>(c)]);
            }
            simplex[static_cast<std::size_t>(k)].first =
                value(simplex[static_cast<std::size_t>(k)].second);
          }
        }
      }
    }
    std::sort(simplex.begin(), simplex.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    s2s = std::exp(simplex[0].second[0]);
    ells = std::exp(simplex[0].second[1]);
    s2t = std::exp(simplex[0].second[2]);
  }

  const NewtonResult map = newton(s2s, ells, s2t);
  require(std::fabs(map.x(0)) < 50.0 && std::fabs(map.x(1)) < 50.0, "separation",
          "fitted effects diverged; the data are (near) separable - strengthen the priors");

  SeekingFit fit;
  fit.params.beta0 = map.x(0);
  fit.params.beta1 = map.x(1);
  fit.params.sigma2_s = s2s;
  fit.params.ell_s = ells;
  fit.params.sigma2_t = s2t;
  fit.params.coarse_spec = coarse_spec;
  fit.params.f1.assign(map.x.data() + 2, map.x.data() + 2 + dz.nc);
  fit.params.f2.assign(static_cast<std::size_t>(n_months), 0.0);
  for (int t = 1; t < n_months; ++t) {
    fit.params.f2[static_cast<std::size_t>(t)] =
        map.x(2 + static_cast<Eigen::Index>(dz.nc) + t - 1);
  }
  fit.max_abs_gradient = map.max_abs_grad;

  const Eigen::MatrixXd cov = map.hess.ldlt().solve(
      Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
  fit.beta0_sd = std::sqrt(std::max(0.0, cov(0, 0)));
  fit.beta1_sd = std::sqrt(std::max(0.0, cov(1, 1)));
  fit.beta0_ci95 = {fit.params.beta0 - 1.959964 * fit.beta0_sd,
                    fit.params.beta0 + 1.959964 * fit.beta0_sd};
  fit.beta1_ci95 = {fit.params.beta1 - 1.959964 * fit.beta1_sd,
                    fit.params.beta1 + 1.959964 * fit.beta1_sd};

  if (options.mcmc) {
    // Whitened random-walk MH around the MAP: x = MAP + scale * unit moves.
    // Kept deliberately plain; the MAP/Laplace path is the default.
    std::vector<double> x(map.x.data(), map.x.data() + map.x.size());
    const Eigen::MatrixXd qs = detail::seeking_prior_precision_spatial(coarse_spec, s2s, ells);
    const double bprec = 1.0 / (options.beta_prior_sd * options.beta_prior_sd);
    auto neg_logpost = [&](const std::vector<double>& xv) {
      double nll = 0.0;
      for (const auto& o : obs) {
        const double eta = detail::seeking_eta(xv, o, dz);
        nll += std::log1p(std::exp(-std::fabs(eta))) + std::max(eta, 0.0) -
               (o.sought ? eta : 0.0);
      }
      Eigen::Map<const Eigen::VectorXd> xe(xv.data(), static_cast<Eigen::Index>(xv.size()));
      const Eigen::VectorXd f1 = xe.segment(2, static_cast<Eigen::Index>(dz.nc));
      nll += 0.5 * f1.dot(qs * f1);
      double prev = 0.0;
      for (int t = 1; t < dz.T; ++t) {
        const double cur = xv[2 + dz.nc + static_cast<std::size_t>(t - 1)];
        nll += 0.5 * (cur - prev) * (cur - prev) / s2t;
        prev = cur;
      }
      nll += 0.5 * bprec * (xv[0] * xv[0] + xv[1] * xv[1]);
      return nll;
    };
    std::vector<double> scales(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      scales[k] = std::sqrt(std::max(1e-12, cov(static_cast<Eigen::Index>(k),
                                                static_cast<Eigen::Index>(k))));
    }
    Rng rng = Rng::stream(options.seed, 0x7365656bull);
    double cur_nll = neg_logpost(x);
    double step = 2.4 / std::sqrt(static_cast<double>(dim));
    std::vector<double> prop = x;
    for (long it = 0; it < options.mcmc_iterations; ++it) {
      for (std::size_t k = 0; k < dim; ++k) prop[k] = x[k] + step * scales[k] * rng.normal();
      const double u = rng.uniform();
      const double prop_nll = neg_logpost(prop);
      const double alpha = std::exp(std::min(0.0, cur_nll - prop_nll));
      if (u < alpha) {
        x = prop;
        cur_nll = prop_nll;
      }
      if (it < options.mcmc_burnin) {
        step = std::exp(std::log(step) +
                        (alpha - 0.234) / std::pow(static_cast<double>(it) + 1.0, 0.6));
      }
      if (it >= options.mcmc_burnin && (it - options.mcmc_burnin) % options.mcmc_thin == 0) {
        fit.beta1_draws.push_back(x[1]);
      }
    }
    if (!fit.beta1_draws.empty()) {
      std::vector<double> sorted = fit.beta1_draws;
      std::sort(sorted.begin(), sorted.end());
      const auto q = [&](double p) {
        const double pos = p * static_cast<double>(sorted.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        return (1 - frac) * sorted[lo] + frac * sorted[std::min(lo + 1, sorted.size() - 1)];
      };
      fit.beta1_ci95 = {q(0.025), q(0.975)};
      double m = 0.0;
      for (double b : fit.beta1_draws) m += b;
      fit.params.beta1 = m / static_cast<double>(fit.beta1_draws.size());
    }
  }
  return fit;
}

/// Warning records emitted by surface prediction.
struct ThetaSurface {
  Raster theta;
  std::vector<std::string> warnings;
};

/**
 * Treatment-seeking probability surface for one month. Cells outside the
 * coarse grid's extent take f1 = 0 (the prior mean: national extrapolation
 * keeps the fitted province's field local). A month beyond the fitted range
 * reuses the last f2 value and emits a warning record. Missing travel-cost
 * cells stay missing.
 */
inline ThetaSurface predict_theta_surface(const TreatmentSeekingParams& params,
                                          const Raster& travel_cost, int month) {
  ThetaSurface out{Raster(travel_cost.spec), {}};
  int month_used = month;
  if (month < 0 || month >= static_cast<int>(params.f2.size())) {
    month_used = static_cast<int>(params.f2.size()) - 1;
    out.warnings.push_back("month " + std::to_string(month) +
                           " outside the fitted range; using the last random-walk value");
  }
  const double f2 = params.f2.empty() ? 0.0 : params.f2[static_cast<std::size_t>(month_used)];
  for (int r = 0; r < travel_cost.spec.nrows; ++r) {
    for (int c = 0; c < travel_cost.spec.ncols; ++c) {
      const std::size_t i = travel_cost.spec.index(c, r);
      if (travel_cost.missing[i]) {
        out.theta.missing[i] = 1;
        continue;
      }
      const double x = travel_cost.spec.cell_center_x(c);
      const double y = travel_cost.spec.cell_center_y(r);
      double f1 = 0.0;
      const int cc = params.coarse_spec.col_of_x(x);
      const int cr = params.coarse_spec.row_of_y(y);
      if (!params.f1.empty() && params.coarse_spec.contains(cc, cr)) {
        f1 = params.f1[params.coarse_spec.index(cc, cr)];
      }
      const double eta = params.beta0 + params.beta1 * travel_cost.values[i] + f1 + f2;
      out.theta.values[i] = 1.0 / (1.0 + std::exp(-eta));
    }
  }
  return out;
}

/// Log prior density of an f2 random-walk path (up to a constant) - the
/// temporal structure is real: permuting months changes this value.
inline double random_walk_log_prior(const std::vector<double>& f2, double sigma2_t) {
  double lp = 0.0;
  for (std::size_t t = 1; t < f2.size(); ++t) {
    const double d = f2[t] - f2[t - 1];
    lp -= 0.5 * d * d / sigma2_t;
  }
  return lp;
}

/// Observation CSV: lon,lat,month,sought[,travel_cost]; the travel cost is
/// read from the given raster when the column is blank or absent.
inline std::vector<SeekObservation> load_seek_observations_csv(
    const std::string& path, const GridSpec& coarse_spec,
    const std::vector<Raster>* travel_by_month = nullptr) {
  std::istringstream in(read_file_text(path));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "parse_error", path + " is empty");
  std::vector<SeekObservation> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    require(f.size() >= 4, "parse_error", path + ": expected lon,lat,month,sought[,travel_cost]");
    const double lon = std::stod(f[0]);
    const double lat = std::stod(f[1]);
    SeekObservation o;
    o.month = std::stoi(f[2]);
    const std::string sought = trim(f[3]);
    o.sought = (sought == "1" || sought == "true");
    o.cell = coarse_spec.cell_of_point(lon, lat, "seek observation");
    if (f.size() >= 5 && !trim(f[4]).empty()) {
      o.travel_cost = std::stod(f[4]);
    } else {
      require(travel_by_month != nullptr && o.month >= 0 &&
                  o.month < static_cast<int>(travel_by_month->size()),
              "missing_input",
              path + ": travel_cost absent and no travel raster available for month " +
                  std::to_string(o.month));
      const Raster& r = (*travel_by_month)[static_cast<std::size_t>(o.month)];
      const std::size_t cell = r.spec.cell_of_point(lon, lat, "seek observation");
      require(!r.missing[cell], "missing_input", "travel cost missing at observation location");
      o.travel_cost = r.values[cell];
    }
    out.push_back(o);
  }
  require(!out.empty(), "parse_error", path + " lists no observations");
  return out;
}

}  // namespace algcp
