#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "algcp/fft.hpp"
#include "algcp/grid.hpp"
#include "algcp/rng.hpp"

namespace algcp {

/// Separable space-time covariance: sigma^2 exp(-d/phi - dt/theta_time),
/// distance in degrees, time in months.
struct LgcpParams {
  std::vector<double> beta;
  double sigma = 1.0;
  double phi = 0.25;
  double theta_time = 1.0;

  void validate() const {
    require(sigma > 0.0 && phi > 0.0 && theta_time > 0.0, "bad_params",
            "sigma, phi and theta_time must be positive");
  }
};

inline double covariance(double d, double dt, const LgcpParams& p) {
  require(d >= 0.0 && dt >= 0.0, "bad_value", "covariance lags must be non-negative");
  return p.sigma * p.sigma * std::exp(-d / p.phi - dt / p.theta_time);
}

/**
 * Exact sampler and whitening operator for the latent space-time field.
 *
 * Space: the exponential correlation is embedded on a torus twice the window
 * size (rounded up to powers of two), where it is diagonalized by the 2-D
 * DFT. With the minimum-image distance and an extension of at least twice
 * the window, covariances between window cells equal the true ones, so the
 * sampler is exact on the window whenever the embedding spectrum is
 * non-negative. A negative spectrum is an error by default; clamping to zero
 * is available behind an explicit flag and reports the clamped mass.
 *
 * Time: slices couple through a stationary AR(1) with a = exp(-1/theta) on
 * the mean-centered fields, which reproduces exp(-|dt|/theta) exactly at
 * integer lags.
 *
 * Everything is parameterized by whitened innovations Gamma (iid standard
 * normal, one extended slice per month):
 *
 *   U_t = S gamma_t          (S = symmetric circulant square root)
 *   V_0 = U_0,  V_t = a V_{t-1} + sqrt(1-a^2) U_t
 *   Y_t = -sigma^2/2 + sigma V_t
 *
 * so hyperparameter moves reuse Gamma, and the gradient pullback is the
 * adjoint of the same linear maps.
 */
class FieldModel {
 public:
  FieldModel(const GridSpec& window, int n_months, double sigma, double phi,
             double theta_time, int ext_factor = 2, bool allow_clamp = false)
      : window_(window),
        n_months_(n_months),
        sigma_(sigma),
        theta_(theta_time),
        ext_cols_(next_pow2(static_cast<std::size_t>(window.ncols) *
                            static_cast<std::size_t>(std::max(1, ext_factor)))),
        ext_rows_(next_pow2(static_cast<std::size_t>(window.nrows) *
                            static_cast<std::size_t>(std::max(1, ext_factor)))),
        fft_(ext_cols_, ext_rows_) {
    window_.validate();
    require(n_months >= 1, "bad_params", "need at least one month");
    require(sigma > 0.0 && phi > 0.0 && theta_time > 0.0, "bad_params",
            "sigma, phi and theta_time must be positive");
    set_phi(phi, allow_clamp);
  }

  std::size_t ext_size() const { return ext_cols_ * ext_rows_; }
  std::size_t ext_cols() const { return ext_cols_; }
  std::size_t ext_rows() const { return ext_rows_; }
  int n_months() const { return n_months_; }
  const GridSpec& window() const { return window_; }
  double sigma() const { return sigma_; }
  double phi() const { return phi_; }
  double theta() const { return theta_; }
  double clamped_mass() const { return clamped_mass_; }
  double ar_coefficient() const { return std::exp(-1.0 / theta_); }

  void set_sigma(double sigma) {
    require(sigma > 0.0, "bad_params", "sigma must be positive");
    sigma_ = sigma;
  }
  void set_theta(double theta) {
    require(theta > 0.0, "bad_params", "theta_time must be positive");
    theta_ = theta;
  }

  /// Rebuilds the embedding spectrum for a new spatial range.
  void set_phi(double phi, bool allow_clamp = false) {
    require(phi > 0.0, "bad_params", "phi must be positive");
    phi_ = phi;
    const std::size_t n = ext_size();
    std::vector<std::complex<double>> c(n);
    for (std::size_t r = 0; r < ext_rows_; ++r) {
      const double wr = static_cast<double>(std::min(r, ext_rows_ - r)) * window_.cell_size;
      for (std::size_t cidx = 0; cidx < ext_cols_; ++cidx) {
        const double wc = static_cast<double>(std::min(cidx, ext_cols_ - cidx)) * window_.cell_size;
        c[r * ext_cols_ + cidx] = std::exp(-std::hypot(wc, wr) / phi_);
      }
    }
    fft_.transform(c.data(), false);
    double max_lambda = 0.0, neg_mass = 0.0, abs_mass = 0.0;
    for (const auto& z : c) {
      max_lambda = std::max(max_lambda, z.real());
      abs_mass += std::fabs(z.real());
      if (z.real() < 0.0) neg_mass += -z.real();
    }
    const double tol = 1e-9 * max_lambda;
    clamped_mass_ = 0.0;
    sqrt_spectrum_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double lambda = c[i].real();
      if (lambda < -tol) {
        if (!allow_clamp) {
          fail("negative_spectrum",
               "circulant embedding is not non-negative definite for phi=" +
                   std::to_string(phi_) +
                   "; enlarge the torus extension or enable explicit clamping");
        }
        clamped_mass_ = neg_mass / abs_mass;
      }
      if (lambda < 0.0) lambda = 0.0;
      sqrt_spectrum_[i] = std::sqrt(lambda);
    }
  }

  /// Applies the circulant square root S to two real slices at once by
  /// packing them into one complex transform (S is a real operator, so the
  /// real and imaginary parts ride along independently). `b` may be null.
  void apply_sqrt_cov(const double* a, const double* b, double* out_a, double* out_b,
                      std::vector<std::complex<double>>& scratch) const {
    const std::size_t n = ext_size();
    scratch.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      scratch[i] = std::complex<double>(a[i], b ? b[i] : 0.0);
    }
    fft_.transform(scratch.data(), false);
    for (std::size_t i = 0; i < n; ++i) scratch[i] *= sqrt_spectrum_[i];
    fft_.transform(scratch.data(), true);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out_a[i] = scratch[i].real() * inv_n;
    if (b) {
      for (std::size_t i = 0; i < n; ++i) out_b[i] = scratch[i].imag() * inv_n;
    }
  }

  /// U_t = S gamma_t for all months. Months are processed in fixed pairs
  /// (2k, 2k+1) so the arithmetic is identical for any worker count.
  void innovations_to_u(const std::vector<double>& gamma, std::vector<double>& u,
                        int threads = 1) const {
    const std::size_t n = ext_size();
    require(gamma.size() == n * static_cast<std::size_t>(n_months_), "bad_params",
            "innovation vector has the wrong length");
    u.resize(gamma.size());
    const std::size_t n_pairs = (static_cast<std::size_t>(n_months_) + 1) / 2;
    parallel_for(n_pairs, threads, [&](std::size_t p) {
      std::vector<std::complex<double>> scratch;
      const std::size_t t0 = 2 * p;
      const std::size_t t1 = t0 + 1;
      const bool has_b = t1 < static_cast<std::size_t>(n_months_);
      apply_sqrt_cov(gamma.data() + t0 * n, has_b ? gamma.data() + t1 * n : nullptr,
                     u.data() + t0 * n, has_b ? u.data() + t1 * n : nullptr, scratch);
    });
  }

  /// AR(1) mixing: V_0 = U_0, V_t = a V_{t-1} + sqrt(1-a^2) U_t.
  void u_to_v(const std::vector<double>& u, std::vector<double>& v) const {
    const std::size_t n = ext_size();
    v.resize(u.size());
    const double a = ar_coefficient();
    const double b = std::sqrt(1.0 - a * a);
    for (std::size_t i = 0; i < n; ++i) v[i] = u[i];
    for (int t = 1; t < n_months_; ++t) {
      const double* ut = u.data() + static_cast<std::size_t>(t) * n;
      const double* vp = v.data() + static_cast<std::size_t>(t - 1) * n;
      double* vt = v.data() + static_cast<std::size_t>(t) * n;
      for (std::size_t i = 0; i < n; ++i) vt[i] = a * vp[i] + b * ut[i];
    }
  }

  double field_value(double v) const { return -0.5 * sigma_ * sigma_ + sigma_ * v; }

  /// Pullback of dL/dY (extended slices) to dL/dGamma: scale by sigma,
  /// run the AR(1) recursion backwards, then apply S (self-adjoint).
  void field_gradient_to_innovations(const std::vector<double>& grad_y,
                                     std::vector<double>& grad_gamma,
                                     int threads = 1) const {
    const std::size_t n = ext_size();
    const double a = ar_coefficient();
    const double b = std::sqrt(1.0 - a * a);
    std::vector<double> h(grad_y.size());
    {
      const std::size_t tl = static_cast<std::size_t>(n_months_ - 1) * n;
      for (std::size_t i = 0; i < n; ++i) h[tl + i] = sigma_ * grad_y[tl + i];
    }
    for (int t = n_months_ - 2; t >= 0; --t) {
      const std::size_t off = static_cast<std::size_t>(t) * n;
      for (std::size_t i = 0; i < n; ++i) {
        h[off + i] = sigma_ * grad_y[off + i] + a * h[off + n + i];
      }
    }
    // dL/dU_0 = h_0; dL/dU_t = b h_t for t >= 1; then S.
    for (int t = 1; t < n_months_; ++t) {
      double* ht = h.data() + static_cast<std::size_t>(t) * n;
      for (std::size_t i = 0; i < n; ++i) ht[i] *= b;
    }
    grad_gamma.resize(grad_y.size());
    const std::size_t n_pairs = (static_cast<std::size_t>(n_months_) + 1) / 2;
    parallel_for(n_pairs, threads, [&](std::size_t p) {
      std::vector<std::complex<double>> scratch;
      const std::size_t t0 = 2 * p;
      const std::size_t t1 = t0 + 1;
      const bool has_b = t1 < static_cast<std::size_t>(n_months_);
      apply_sqrt_cov(h.data() + t0 * n, has_b ? h.data() + t1 * n : nullptr,
                     grad_gamma.data() + t0 * n, has_b ? grad_gamma.data() + t1 * n : nullptr,
                     scratch);
    });
  }

  std::size_t ext_index_of_window_cell(std::size_t window_index) const {
    const std::size_t c = window_index % static_cast<std::size_t>(window_.ncols);
    const std::size_t r = window_index / static_cast<std::size_t>(window_.ncols);
    return r * ext_cols_ + c;
  }

 private:
  GridSpec window_;
  int n_months_;
  double sigma_, phi_, theta_;
  std::size_t ext_cols_, ext_rows_;
  Fft2 fft_;
  std::vector<double> sqrt_spectrum_;
  double clamped_mass_ = 0.0;
};

/// A realization of the latent field together with its innovations.
struct LatentField {
  std::vector<double> gamma;   // whitened innovations, extended grid x months
  std::vector<std::vector<double>> y;  // window values per month
};

/// Draws one field realization with exactly the target covariance on the
/// window (given a non-negative embedding spectrum).
inline LatentField field_sample(const LgcpParams& params, const GridSpec& spec,
                                int n_months, std::uint64_t seed, int ext_factor = 2,
                                bool allow_clamp = false) {
  params.validate();
  FieldModel model(spec, n_months, params.sigma, params.phi, params.theta_time,
                   ext_factor, allow_clamp);
  Rng rng = Rng::stream(seed, 0x6669656c64ull);
  LatentField out;
  out.gamma.resize(model.ext_size() * static_cast<std::size_t>(n_months));
  for (double& g : out.gamma) g = rng.normal();
  std::vector<double> u, v;
  model.innovations_to_u(out.gamma, u);
  model.u_to_v(u, v);
  out.y.assign(static_cast<std::size_t>(n_months), std::vector<double>(spec.size()));
  for (int t = 0; t < n_months; ++t) {
    for (std::size_t i = 0; i < spec.size(); ++i) {
      out.y[static_cast<std::size_t>(t)][i] =
          model.field_value(v[static_cast<std::size_t>(t) * model.ext_size() +
                              model.ext_index_of_window_cell(i)]);
    }
  }
  return out;
}

}  // namespace algcp
