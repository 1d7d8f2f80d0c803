#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

namespace dcf {

namespace detail {
class FftTables;
}

enum class Padding { Valid, Same };

/// Dense 3-D feature map. Values are stored row-major in (row, column,
/// channel) order; all arithmetic is done in double precision.
struct Tensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  Tensor() = default;
  Tensor(int h, int w, int c, double fill = 0.0);

  double& at(int r, int c, int ch) {
    return values[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  double at(int r, int c, int ch) const {
    return values[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }

  std::size_t count() const { return values.size(); }
  bool all_finite() const;
};

/// Crops a spatial region, keeping all channels.
Tensor crop(const Tensor& input, int row0, int col0, int h, int w);

/// Bank of square convolution kernels plus one bias per output channel.
/// Weights are stored in (out, row, column, in) order.
struct KernelBank {
  int count = 0;
  int size = 0;
  int inChannels = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  KernelBank() = default;
  KernelBank(int count_, int size_, int inChannels_);

  double& weight(int out, int r, int c, int in) {
    return weights[((static_cast<std::size_t>(out) * size + r) * size + c) * inChannels + in];
  }
  double weight(int out, int r, int c, int in) const {
    return weights[((static_cast<std::size_t>(out) * size + r) * size + c) * inChannels + in];
  }
};

/// Counters exposed by the tiled frequency-domain convolution. A tile is one
/// spatial block of one input channel; all-zero tiles never reach a forward
/// transform.
struct FftConvStats {
  long tilesTotal = 0;
  long tilesTransformed = 0;
  long tilesSkipped = 0;
  int tileSide = 0;
};

/// Sliding cross-correlation of the bank over the input (no kernel flip).
/// Valid padding shrinks the output by size-1; same padding zero-pads and
/// requires an odd kernel.
Tensor conv2d_direct(const Tensor& input, const KernelBank& bank, Padding padding);

/// Reusable frequency-domain convolution: kernel spectra are transformed once
/// at construction and amortized over many inputs (score maps over dozens of
/// fragments and scales reuse one plan). Real data rides in packed pairs, two
/// channels per complex transform, and all-zero input tiles are skipped.
class FftConvPlan {
 public:
  FftConvPlan(const KernelBank& bank, Padding padding, int tileTarget = 16);
  ~FftConvPlan();
  FftConvPlan(FftConvPlan&&) noexcept;
  FftConvPlan& operator=(FftConvPlan&&) noexcept;

  Tensor run(const Tensor& input, FftConvStats* stats = nullptr);
  int tile_side() const { return tstep_; }

 private:
  int count_;
  int ksize_;
  int inChannels_;
  Padding padding_;
  std::vector<double> biases_;
  int fsize_ = 0;
  int tstep_ = 0;
  std::size_t cells_ = 0;
  int outPairs_ = 0;
  // Flipped kernel spectra, output channels packed in pairs: [pair][in].
  std::vector<std::vector<std::complex<double>>> kernelSpectra_;
  // Scratch reused across tiles and calls.
  std::vector<std::vector<std::complex<double>>> inputSpectra_;
  std::vector<std::complex<double>> packed_;
  std::vector<std::complex<double>> acc_;
  std::vector<char> live_;
  std::unique_ptr<detail::FftTables> tables_;
};

/// Same contract as conv2d_direct, through a one-shot FftConvPlan; results
/// agree with the direct path within 1e-6. Pass stats for the tile counters.
Tensor conv2d_fft(const Tensor& input, const KernelBank& bank, Padding padding,
                  FftConvStats* stats = nullptr);

Tensor relu(const Tensor& input);

/// Nearest-neighbor resize using the pixel-center convention. Source values
/// are copied verbatim, so exact zeros stay exact zeros.
Tensor nn_resize(const Tensor& input, int outHeight, int outWidth);

/// Fraction of exactly-zero values.
double sparsity(const Tensor& input);

}  // namespace dcf
