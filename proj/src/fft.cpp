#include "fft.hpp"

#include <cmath>

namespace dcf::detail {

int next_pow2(int x) {
  int n = 1;
  while (n < x) n <<= 1;
  return n;
}

void fft(std::complex<double>* a, int n, bool inverse) {
  // Bit-reversal permutation.
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / len;
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / n;
    for (int i = 0; i < n; ++i) a[i] *= inv;
  }
}

void fft2(std::vector<std::complex<double>>& grid, int n, bool inverse) {
  for (int r = 0; r < n; ++r) fft(grid.data() + static_cast<std::size_t>(r) * n, n, inverse);
  std::vector<std::complex<double>> col(n);
  for (int c = 0; c < n; ++c) {
    for (int r = 0; r < n; ++r) col[r] = grid[static_cast<std::size_t>(r) * n + c];
    fft(col.data(), n, inverse);
    for (int r = 0; r < n; ++r) grid[static_cast<std::size_t>(r) * n + c] = col[r];
  }
}

FftTables::FftTables(int n) : n_(n), reversal_(n, 0) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    reversal_[i] = j;
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / len;
    for (int k = 0; k < len / 2; ++k)
      twiddle_.emplace_back(std::cos(ang * k), std::sin(ang * k));
  }
}

void FftTables::run(std::complex<double>* a, bool inverse) const {
  for (int i = 1; i < n_; ++i) {
    const int j = reversal_[i];
    if (i < j) std::swap(a[i], a[j]);
  }
  const std::complex<double>* stage = twiddle_.data();
  for (int len = 2; len <= n_; len <<= 1) {
    const int half = len / 2;
    for (int i = 0; i < n_; i += len) {
      std::complex<double>* lo = a + i;
      std::complex<double>* hi = a + i + half;
      for (int k = 0; k < half; ++k) {
        const double wr = stage[k].real();
        const double wi = inverse ? -stage[k].imag() : stage[k].imag();
        const double vr = hi[k].real() * wr - hi[k].imag() * wi;
        const double vi = hi[k].real() * wi + hi[k].imag() * wr;
        const double ur = lo[k].real();
        const double ui = lo[k].imag();
        lo[k] = {ur + vr, ui + vi};
        hi[k] = {ur - vr, ui - vi};
      }
    }
    stage += half;
  }
  if (inverse) {
    const double inv = 1.0 / n_;
    for (int i = 0; i < n_; ++i) a[i] *= inv;
  }
}

void FftTables::run2d(std::vector<std::complex<double>>& grid, bool inverse) const {
  for (int r = 0; r < n_; ++r) run(grid.data() + static_cast<std::size_t>(r) * n_, inverse);
  std::vector<std::complex<double>> col(n_);
  for (int c = 0; c < n_; ++c) {
    for (int r = 0; r < n_; ++r) col[r] = grid[static_cast<std::size_t>(r) * n_ + c];
    run(col.data(), inverse);
    for (int r = 0; r < n_; ++r) grid[static_cast<std::size_t>(r) * n_ + c] = col[r];
  }
}

}  // namespace dcf::detail
