#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "algcp/common.hpp"

namespace algcp {

/**
 * Deterministic random number generation for the whole toolkit.
 *
 * We keep our own generator (xoshiro256++) and our own variate algorithms so
 * that every sampled quantity is a pure function of the seed, independent of
 * the standard library implementation. Seeds for independent streams (one per
 * replicate, per chain, per month of simulation noise, ...) are derived from
 * a base seed plus stream identifiers via splitmix64.
 */
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  /// Derives an independent stream from (seed, id0, id1).
  static Rng stream(std::uint64_t seed, std::uint64_t id0, std::uint64_t id1 = 0) {
    std::uint64_t mix = seed;
    (void)splitmix64(mix);
    mix ^= 0x632be59bd9b4e019ull ^ id0 * 0x9e3779b97f4a7c15ull;
    (void)splitmix64(mix);
    mix ^= id1 * 0xd1b54a32d192ed03ull;
    return Rng(splitmix64(mix));
  }

  void reseed(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
    have_spare_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1), never exactly zero (safe for logs).
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  /// Standard normal via Marsaglia's polar method (one spare cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  double exponential() { return -std::log(uniform_pos()); }

  /// Poisson draw; Knuth multiplication below 30, Hormann's PTRS above.
  long poisson(double lambda) {
    require(std::isfinite(lambda) && lambda >= 0.0, "bad_rate",
            "Poisson rate must be finite and non-negative");
    if (lambda == 0.0) return 0;
    if (lambda < 30.0) {
      const double limit = std::exp(-lambda);
      long k = 0;
      double prod = uniform();
      while (prod > limit) {
        ++k;
        prod *= uniform();
      }
      return k;
    }
    return poisson_ptrs(lambda);
  }

  /// Binomial via sum of Bernoulli for small n, otherwise beta-free inversion
  /// by counting over a Poisson-style product is too slow, so we use the
  /// conditional waiting-time method on top of poisson for large n*p.
  long binomial(long n, double p) {
    require(n >= 0 && p >= 0.0 && p <= 1.0, "bad_rate", "binomial parameters out of range");
    if (n == 0 || p == 0.0) return 0;
    if (p == 1.0) return n;
    if (p > 0.5) return n - binomial(n, 1.0 - p);
    if (n <= 64) {
      long k = 0;
      for (long i = 0; i < n; ++i) k += (uniform() < p) ? 1 : 0;
      return k;
    }
    // First waiting-time method: count geometric skips.
    const double logq = std::log1p(-p);
    long k = -1;
    long skipped = 0;
    while (true) {
      skipped += static_cast<long>(std::floor(std::log(uniform_pos()) / logq)) + 1;
      if (skipped > n) break;
      ++k;
    }
    return k + 1;
  }

  /// Multinomial allocation of `total` trials over (unnormalized) weights.
  /// Sequential conditional binomials; exact totals by construction.
  std::vector<long> multinomial(long total, const std::vector<double>& weights) {
    std::vector<long> out(weights.size(), 0);
    double wsum = 0.0;
    for (double w : weights) {
      require(w >= 0.0 && std::isfinite(w), "bad_rate", "multinomial weight invalid");
      wsum += w;
    }
    require(total == 0 || wsum > 0.0, "zero_mass",
            "multinomial: all weights zero with positive total");
    long left = total;
    for (std::size_t i = 0; i + 1 < weights.size() && left > 0; ++i) {
      const double p = (wsum > 0.0) ? weights[i] / wsum : 0.0;
      const long k = binomial(left, std::min(1.0, std::max(0.0, p)));
      out[i] = k;
      left -= k;
      wsum -= weights[i];
      if (wsum <= 0.0) break;
    }
    if (!weights.empty()) out[weights.size() - 1] += left;
    return out;
  }

  /// Full generator state (for checkpoint/restart), including the cached
  /// normal spare so resumed streams continue bit-exactly.
  std::array<std::uint64_t, 6> state_words() const {
    std::array<std::uint64_t, 6> w{};
    for (int i = 0; i < 4; ++i) w[static_cast<std::size_t>(i)] = s_[i];
    w[4] = have_spare_ ? 1u : 0u;
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof spare_);
    std::memcpy(&bits, &spare_, sizeof bits);
    w[5] = bits;
    return w;
  }

  void set_state_words(const std::array<std::uint64_t, 6>& w) {
    for (int i = 0; i < 4; ++i) s_[i] = w[static_cast<std::size_t>(i)];
    have_spare_ = w[4] != 0;
    std::memcpy(&spare_, &w[5], sizeof spare_);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  // Transformed rejection with squeeze (Hormann 1993), valid for lambda >= 10.
  long poisson_ptrs(double lambda) {
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    while (true) {
      const double u = uniform() - 0.5;
      const double v = uniform_pos();
      const double us = 0.5 - std::fabs(u);
      const double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<long>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
          kf * loglam - lambda - std::lgamma(kf + 1.0)) {
        return static_cast<long>(kf);
      }
    }
  }

  std::uint64_t s_[4] = {};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace algcp
