#pragma once

#include <complex>
#include <vector>

namespace dcf::detail {

int next_pow2(int x);

/// In-place iterative radix-2 transform; size must be a power of two.
/// The inverse pass divides by the length.
void fft(std::complex<double>* a, int n, bool inverse);

/// 2-D transform over an n-by-n row-major grid (rows, then columns).
void fft2(std::vector<std::complex<double>>& grid, int n, bool inverse);

/// Precomputed twiddle factors for repeated transforms of one size. Tables
/// replace the per-butterfly twiddle recurrence, so the butterflies of a
/// stage become independent.
class FftTables {
 public:
  explicit FftTables(int n);
  int size() const { return n_; }
  void forward(std::complex<double>* a) const { run(a, false); }
  void inverse(std::complex<double>* a) const { run(a, true); }
  void forward2d(std::vector<std::complex<double>>& grid) const { run2d(grid, false); }
  void inverse2d(std::vector<std::complex<double>>& grid) const { run2d(grid, true); }

 private:
  void run(std::complex<double>* a, bool inverse) const;
  void run2d(std::vector<std::complex<double>>& grid, bool inverse) const;

  int n_;
  std::vector<int> reversal_;
  std::vector<std::complex<double>> twiddle_;  // per stage, len/2 entries each
};

}  // namespace dcf::detail
