#pragma once

// Statistical helpers for the test suites: quantiles, batch-means Monte
// Carlo standard errors, and a one-sample Kolmogorov-Smirnov test.

#include <algorithm>
#include <cmath>
#include <vector>

namespace teststat {

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sd(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

/// Linear-interpolation quantile of a copy of x (q in [0,1]).
inline double quantile(std::vector<double> x, double q) {
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return (1.0 - frac) * x[lo] + frac * x[hi];
}

/// Batch-means Monte Carlo standard error of the mean of a (possibly
/// autocorrelated) chain trace.
inline double mcse_batch_means(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const std::size_t b = std::max<std::size_t>(2, static_cast<std::size_t>(std::sqrt(n)));
  const std::size_t nb = n / b;
  std::vector<double> bm(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    double s = 0.0;
    for (std::size_t i = k * b; i < (k + 1) * b; ++i) s += x[i];
    bm[k] = s / static_cast<double>(b);
  }
  const double m = mean(bm);
  double v = 0.0;
  for (double bv : bm) v += (bv - m) * (bv - m);
  v /= static_cast<double>(nb - 1);
  return std::sqrt(v / static_cast<double>(nb));
}

inline double normal_cdf(double x, double mu = 0.0, double sigma = 1.0) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

/// Asymptotic Kolmogorov-Smirnov p-value for a one-sample test against the
/// given continuous CDF.
template <typename Cdf>
inline double ks_test_pvalue(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::min(1.0, std::max(0.0, p));
}

}  // namespace teststat
