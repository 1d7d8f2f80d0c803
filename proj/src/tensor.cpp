#include "dcf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fft.hpp"

namespace dcf {

Tensor::Tensor(int h, int w, int c, double fill)
    : height(h), width(w), channels(c),
      values(static_cast<std::size_t>(h) * w * c, fill) {
  if (h <= 0 || w <= 0 || c <= 0)
    throw std::invalid_argument("Tensor dimensions must be positive, got " + std::to_string(h) +
                                "x" + std::to_string(w) + "x" + std::to_string(c));
}

bool Tensor::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor crop(const Tensor& input, int row0, int col0, int h, int w) {
  if (row0 < 0 || col0 < 0 || row0 + h > input.height || col0 + w > input.width)
    throw std::invalid_argument("crop region out of bounds");
  Tensor out(h, w, input.channels);
  for (int r = 0; r < h; ++r) {
    const double* src = &input.values[(static_cast<std::size_t>(row0 + r) * input.width + col0) * input.channels];
    double* dst = &out.values[static_cast<std::size_t>(r) * w * input.channels];
    std::copy(src, src + static_cast<std::size_t>(w) * input.channels, dst);
  }
  return out;
}

KernelBank::KernelBank(int count_, int size_, int inChannels_)
    : count(count_), size(size_), inChannels(inChannels_),
      weights(static_cast<std::size_t>(count_) * size_ * size_ * inChannels_, 0.0),
      biases(static_cast<std::size_t>(count_), 0.0) {
  if (count_ <= 0 || size_ <= 0 || inChannels_ <= 0)
    throw std::invalid_argument("KernelBank dimensions must be positive");
}

namespace {

void validate_conv(const Tensor& input, const KernelBank& bank, Padding padding) {
  if (bank.inChannels != input.channels)
    throw std::invalid_argument("convolution channel mismatch: input has " +
                                std::to_string(input.channels) + " channels, bank expects " +
                                std::to_string(bank.inChannels));
  if (padding == Padding::Same && bank.size % 2 == 0)
    throw std::invalid_argument("same padding requires an odd kernel size, got " +
                                std::to_string(bank.size));
  if (padding == Padding::Valid && (input.height < bank.size || input.width < bank.size))
    throw std::invalid_argument("input " + std::to_string(input.height) + "x" +
                                std::to_string(input.width) +
                                " smaller than kernel size " + std::to_string(bank.size) +
                                " under valid padding");
}

Tensor pad_same(const Tensor& input, int k) {
  const int p = (k - 1) / 2;
  Tensor out(input.height + k - 1, input.width + k - 1, input.channels, 0.0);
  for (int r = 0; r < input.height; ++r) {
    const double* src = &input.values[static_cast<std::size_t>(r) * input.width * input.channels];
    double* dst = &out.values[(static_cast<std::size_t>(r + p) * out.width + p) * out.channels];
    std::copy(src, src + static_cast<std::size_t>(input.width) * input.channels, dst);
  }
  return out;
}

// Valid cross-correlation over x; bias added per output channel. The four
// partial sums break the FP dependency chain; their combination order is
// fixed, so results stay deterministic.
Tensor conv_valid(const Tensor& x, const KernelBank& bank) {
  const int k = bank.size;
  const int oh = x.height - k + 1;
  const int ow = x.width - k + 1;
  const int ch = x.channels;
  Tensor out(oh, ow, bank.count);
  const int span = k * ch;
  for (int m = 0; m < oh; ++m) {
    for (int n = 0; n < ow; ++n) {
      double* dst = &out.values[(static_cast<std::size_t>(m) * ow + n) * bank.count];
      for (int j = 0; j < bank.count; ++j) {
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
        for (int u = 0; u < k; ++u) {
          const double* __restrict xrow =
              &x.values[((static_cast<std::size_t>(m + u)) * x.width + n) * ch];
          const double* __restrict wrow = &bank.weights[(static_cast<std::size_t>(j) * k + u) * span];
          int t = 0;
          for (; t + 4 <= span; t += 4) {
            a0 += xrow[t] * wrow[t];
            a1 += xrow[t + 1] * wrow[t + 1];
            a2 += xrow[t + 2] * wrow[t + 2];
            a3 += xrow[t + 3] * wrow[t + 3];
          }
          for (; t < span; ++t) a0 += xrow[t] * wrow[t];
        }
        dst[j] = bank.biases[j] + ((a0 + a1) + (a2 + a3));
      }
    }
  }
  return out;
}

}  // namespace

Tensor conv2d_direct(const Tensor& input, const KernelBank& bank, Padding padding) {
  validate_conv(input, bank, padding);
  if (padding == Padding::Same) return conv_valid(pad_same(input, bank.size), bank);
  return conv_valid(input, bank);
}

FftConvPlan::FftConvPlan(const KernelBank& bank, Padding padding, int tileTarget)
    : count_(bank.count), ksize_(bank.size), inChannels_(bank.inChannels), padding_(padding),
      biases_(bank.biases) {
  if (padding == Padding::Same && ksize_ % 2 == 0)
    throw std::invalid_argument("same padding requires an odd kernel size, got " +
                                std::to_string(ksize_));
  // Each tstep-square block convolves linearly inside an fsize-square
  // power-of-two transform (overlap-add).
  fsize_ = detail::next_pow2(std::max(tileTarget, 1) + ksize_ - 1);
  tstep_ = fsize_ - ksize_ + 1;
  cells_ = static_cast<std::size_t>(fsize_) * fsize_;
  outPairs_ = (count_ + 1) / 2;
  tables_ = std::make_unique<detail::FftTables>(fsize_);

  // Kernel spectra, spatially flipped so the product realizes correlation.
  // Two output channels pack into one complex grid; the inverse transform
  // then yields both correlations as real and imaginary parts.
  using cd = std::complex<double>;
  kernelSpectra_.assign(static_cast<std::size_t>(outPairs_) * inChannels_,
                        std::vector<cd>(cells_));
  for (int jp = 0; jp < outPairs_; ++jp) {
    const int j0 = 2 * jp;
    const int j1 = j0 + 1;
    for (int i = 0; i < inChannels_; ++i) {
      std::vector<cd>& grid = kernelSpectra_[static_cast<std::size_t>(jp) * inChannels_ + i];
      std::fill(grid.begin(), grid.end(), cd(0.0, 0.0));
      for (int u = 0; u < ksize_; ++u)
        for (int v = 0; v < ksize_; ++v)
          grid[static_cast<std::size_t>(ksize_ - 1 - u) * fsize_ + (ksize_ - 1 - v)] =
              cd(bank.weight(j0, u, v, i), j1 < count_ ? bank.weight(j1, u, v, i) : 0.0);
      tables_->forward2d(grid);
    }
  }

  inputSpectra_.assign(inChannels_, std::vector<cd>(cells_));
  packed_.resize(cells_);
  acc_.resize(cells_);
  live_.assign(inChannels_, 0);
}

FftConvPlan::~FftConvPlan() = default;
FftConvPlan::FftConvPlan(FftConvPlan&&) noexcept = default;
FftConvPlan& FftConvPlan::operator=(FftConvPlan&&) noexcept = default;

Tensor FftConvPlan::run(const Tensor& input, FftConvStats* stats) {
  if (input.channels != inChannels_)
    throw std::invalid_argument("convolution channel mismatch: input has " +
                                std::to_string(input.channels) + " channels, bank expects " +
                                std::to_string(inChannels_));
  if (padding_ == Padding::Valid && (input.height < ksize_ || input.width < ksize_))
    throw std::invalid_argument("input " + std::to_string(input.height) + "x" +
                                std::to_string(input.width) + " smaller than kernel size " +
                                std::to_string(ksize_) + " under valid padding");
  const Tensor x = (padding_ == Padding::Same) ? pad_same(input, ksize_) : input;
  const int k = ksize_;
  const int ch = inChannels_;
  const int fsize = fsize_;
  using cd = std::complex<double>;
  if (stats) stats->tileSide = tstep_;

  // Full linear-convolution accumulator per output channel.
  const int zh = x.height + k - 1;
  const int zw = x.width + k - 1;
  std::vector<std::vector<double>> z(count_,
                                     std::vector<double>(static_cast<std::size_t>(zh) * zw, 0.0));

  for (int r0 = 0; r0 < x.height; r0 += tstep_) {
    const int th = std::min(tstep_, x.height - r0);
    for (int c0 = 0; c0 < x.width; c0 += tstep_) {
      const int tw = std::min(tstep_, x.width - c0);

      int liveCount = 0;
      for (int i = 0; i < ch; ++i) {
        if (stats) ++stats->tilesTotal;
        bool zero = true;
        for (int r = 0; r < th && zero; ++r) {
          const double* row = &x.values[(static_cast<std::size_t>(r0 + r) * x.width + c0) * ch + i];
          for (int c = 0; c < tw; ++c)
            if (row[static_cast<std::size_t>(c) * ch] != 0.0) {
              zero = false;
              break;
            }
        }
        live_[i] = zero ? 0 : 1;
        liveCount += live_[i];
        if (stats && zero) ++stats->tilesSkipped;
      }
      if (liveCount == 0) continue;

      // Forward transforms: two real channels share one complex transform,
      // then split through conjugate symmetry.
      for (int i0 = 0; i0 < ch; i0 += 2) {
        const int i1 = i0 + 1;
        const bool live0 = live_[i0] != 0;
        const bool live1 = i1 < ch && live_[i1] != 0;
        if (!live0 && !live1) continue;
        std::fill(packed_.begin(), packed_.end(), cd(0.0, 0.0));
        for (int r = 0; r < th; ++r) {
          const double* row = &x.values[(static_cast<std::size_t>(r0 + r) * x.width + c0) * ch];
          cd* dst = &packed_[static_cast<std::size_t>(r) * fsize];
          for (int c = 0; c < tw; ++c)
            dst[c] = cd(live0 ? row[static_cast<std::size_t>(c) * ch + i0] : 0.0,
                        live1 ? row[static_cast<std::size_t>(c) * ch + i1] : 0.0);
        }
        tables_->forward2d(packed_);
        if (stats) ++stats->tilesTransformed;

        // packed = X + iY; X(k) = (Z(k) + conj(Z(-k)))/2, Y likewise.
        std::vector<cd>& specA = inputSpectra_[i0];
        std::vector<cd>* specB = live1 ? &inputSpectra_[i1] : nullptr;
        for (int r = 0; r < fsize; ++r) {
          const int rr = (fsize - r) & (fsize - 1);
          const cd* zrow = &packed_[static_cast<std::size_t>(r) * fsize];
          const cd* zrev = &packed_[static_cast<std::size_t>(rr) * fsize];
          cd* arow = &specA[static_cast<std::size_t>(r) * fsize];
          cd* brow = specB ? &(*specB)[static_cast<std::size_t>(r) * fsize] : nullptr;
          for (int c = 0; c < fsize; ++c) {
            const int cc = (fsize - c) & (fsize - 1);
            const double p = zrow[c].real();
            const double q = zrow[c].imag();
            const double pr = zrev[cc].real();
            const double qr = zrev[cc].imag();
            arow[c] = cd(0.5 * (p + pr), 0.5 * (q - qr));
            if (brow) brow[c] = cd(0.5 * (q + qr), 0.5 * (pr - p));
          }
        }
      }

      const int outH = std::min(th + k - 1, zh - r0);
      const int outW = std::min(tw + k - 1, zw - c0);
      for (int jp = 0; jp < outPairs_; ++jp) {
        std::fill(acc_.begin(), acc_.end(), cd(0.0, 0.0));
        for (int i = 0; i < ch; ++i) {
          if (!live_[i]) continue;
          const cd* xs = inputSpectra_[i].data();
          const cd* ks = kernelSpectra_[static_cast<std::size_t>(jp) * ch + i].data();
          cd* a = acc_.data();
          for (std::size_t t = 0; t < cells_; ++t) {
            const double xr = xs[t].real(), xi = xs[t].imag();
            const double kr = ks[t].real(), ki = ks[t].imag();
            a[t] += cd(xr * kr - xi * ki, xr * ki + xi * kr);
          }
        }
        tables_->inverse2d(acc_);
        const int j0 = 2 * jp;
        const int j1 = j0 + 1;
        for (int r = 0; r < outH; ++r) {
          double* dst0 = &z[j0][static_cast<std::size_t>(r0 + r) * zw + c0];
          double* dst1 = j1 < count_ ? &z[j1][static_cast<std::size_t>(r0 + r) * zw + c0] : nullptr;
          const cd* src = &acc_[static_cast<std::size_t>(r) * fsize];
          for (int c = 0; c < outW; ++c) {
            dst0[c] += src[c].real();
            if (dst1) dst1[c] += src[c].imag();
          }
        }
      }
    }
  }

  const int oh = x.height - k + 1;
  const int ow = x.width - k + 1;
  Tensor out(oh, ow, count_);
  for (int m = 0; m < oh; ++m)
    for (int n = 0; n < ow; ++n)
      for (int j = 0; j < count_; ++j)
        out.at(m, n, j) =
            z[j][static_cast<std::size_t>(m + k - 1) * zw + (n + k - 1)] + biases_[j];
  return out;
}

Tensor conv2d_fft(const Tensor& input, const KernelBank& bank, Padding padding,
                  FftConvStats* stats) {
  validate_conv(input, bank, padding);
  FftConvPlan plan(bank, padding);
  return plan.run(input, stats);
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor nn_resize(const Tensor& input, int outHeight, int outWidth) {
  if (outHeight <= 0 || outWidth <= 0)
    throw std::invalid_argument("nn_resize target dimensions must be positive");
  Tensor out(outHeight, outWidth, input.channels);
  const double rScale = static_cast<double>(input.height) / outHeight;
  const double cScale = static_cast<double>(input.width) / outWidth;
  for (int m = 0; m < outHeight; ++m) {
    int sr = static_cast<int>((m + 0.5) * rScale);
    sr = std::min(sr, input.height - 1);
    for (int n = 0; n < outWidth; ++n) {
      int sc = static_cast<int>((n + 0.5) * cScale);
      sc = std::min(sc, input.width - 1);
      const double* src = &input.values[(static_cast<std::size_t>(sr) * input.width + sc) * input.channels];
      double* dst = &out.values[(static_cast<std::size_t>(m) * outWidth + n) * input.channels];
      std::copy(src, src + input.channels, dst);
    }
  }
  return out;
}

double sparsity(const Tensor& input) {
  if (input.values.empty()) return 0.0;
  std::size_t zeros = 0;
  for (double v : input.values)
    if (v == 0.0) ++zeros;
  return static_cast<double>(zeros) / static_cast<double>(input.values.size());
}

}  // namespace dcf
