#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "algcp/common.hpp"

namespace algcp {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/**
 * Iterative radix-2 Cooley-Tukey transform, in place, power-of-two lengths.
 *
 * Unnormalized: forward computes sum_k x[k] e^{-2пi jk/n}; the inverse leaves
 * the 1/n to the caller. Twiddles are built from std::polar per stage, which
 * keeps the output a pure function of the input on a given platform.
 */
struct Fft {
  explicit Fft(std::size_t n) : n_(n) {
    require(is_pow2(n), "bad_fft_size", "FFT length must be a power of two");
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = std::complex<double>(std::cos(ang), std::sin(ang));
    }
    bitrev_.resize(n);
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bitrev_[i] = j;
      std::size_t bit = n >> 1;
      while (j & bit) {
        j ^= bit;
        bit >>= 1;
      }
      j |= bit;
    }
  }

  std::size_t size() const { return n_; }

  void transform(std::complex<double>* a, bool inverse) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t j = bitrev_[i];
      if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len >> 1;
      const std::size_t step = n_ / len;
      for (std::size_t base = 0; base < n_; base += len) {
        for (std::size_t k = 0; k < half; ++k) {
          std::complex<double> w = twiddle_[k * step];
          if (inverse) w = std::conj(w);
          const std::complex<double> u = a[base + k];
          const std::complex<double> v = a[base + k + half] * w;
          a[base + k] = u + v;
          a[base + k + half] = u - v;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> bitrev_;
};

/// 2-D transform over an ncols x nrows row-major complex field (in place).
/// Unnormalized in both directions, like Fft::transform.
class Fft2 {
 public:
  Fft2(std::size_t ncols, std::size_t nrows)
      : ncols_(ncols), nrows_(nrows), row_fft_(ncols), col_fft_(nrows) {}

  std::size_t size() const { return ncols_ * nrows_; }
  std::size_t ncols() const { return ncols_; }
  std::size_t nrows() const { return nrows_; }

  void transform(std::complex<double>* a, bool inverse) const {
    for (std::size_t r = 0; r < nrows_; ++r) {
      row_fft_.transform(a + r * ncols_, inverse);
    }
    std::vector<std::complex<double>> col(nrows_);
    for (std::size_t c = 0; c < ncols_; ++c) {
      for (std::size_t r = 0; r < nrows_; ++r) col[r] = a[r * ncols_ + c];
      col_fft_.transform(col.data(), inverse);
      for (std::size_t r = 0; r < nrows_; ++r) a[r * ncols_ + c] = col[r];
    }
  }

 private:
  std::size_t ncols_, nrows_;
  Fft row_fft_;
  Fft col_fft_;
};

}  // namespace algcp
