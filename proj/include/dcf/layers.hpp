#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dcf/tensor.hpp"

namespace dcf {

enum class ConvBackend { Direct, Fft };

/// Cross-map divisive normalization parameters. The window spans r adjacent
/// channels (integer halves, clamped at the ends).
struct LcnParams {
  double kappa = 1.0;
  double alpha = 0.001;
  double beta = 0.75;
  int r = 5;
};

/// Fully-connected stage: outCount rows over a flattened
/// (inHeight, inWidth, inChannels) input, row-major (row, column, channel).
struct FcWeights {
  int outCount = 0;
  int inHeight = 0;
  int inWidth = 0;
  int inChannels = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  FcWeights() = default;
  FcWeights(int outCount_, int inHeight_, int inWidth_, int inChannels_);
  int inputLength() const { return inHeight * inWidth * inChannels; }
};

enum class LayerKind { Conv, Pool, Lcn, Fc, Softmax };

/// Per-layer learning-rate block: weight/bias learning rates, momenta and
/// weight decay. Unused for layers without parameters.
struct LayerHyper {
  double epsW = 0.0;
  double epsB = 0.0;
  double momW = 0.0;
  double momB = 0.0;
  double wc = 0.0;
};

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  KernelBank bank;   // Conv
  int poolSize = 0;  // Pool
  LcnParams lcn;     // Lcn
  FcWeights fc;      // Fc
  LayerHyper hyper;  // Conv / Fc
};

/// Ordered layer stack plus the model window geometry it was built for.
struct NetworkSpec {
  int inputSide = 0;
  int inputChannels = 0;
  std::vector<LayerSpec> layers;

  std::vector<int> pool_sizes() const;
  int fc_layer_index() const;
  int window_side() const { return inputSide; }

  /// Walks the geometry chain under the given padding mode and throws on any
  /// channel or size inconsistency.
  void validate(Padding padding) const;
};

/// Class index conventions for the two-way classifier head.
inline constexpr int kBackgroundClass = 0;
inline constexpr int kFaceClass = 1;

/// The reference 32x32 detection stack: conv 5x5x16 + ReLU, pool 2, LCN,
/// conv 5x5x16 + ReLU, LCN, pool 2, FC (2 classes), softmax. Weights are
/// Gaussian-initialized from the seed; biases start at zero. The FC geometry
/// follows the padding mode the net is meant to run under.
NetworkSpec reference_net(std::uint32_t seed, Padding padding = Padding::Same);

/// Number of pooling fragments alive at the given layer index (product of
/// squared pool sizes of the pooling layers before it).
int fragment_count_at(const NetworkSpec& net, int layerIndex);

Tensor conv_layer_forward(const Tensor& input, const KernelBank& bank, Padding padding,
                          ConvBackend backend = ConvBackend::Direct);

/// All s*s pooling tile offsets in row-major order.
std::vector<std::pair<int, int>> enumerate_offsets(int s);

/// Non-overlapping s-by-s max pooling with the tiling shifted by the given
/// offset; only complete tiles contribute.
Tensor maxpool_fragment(const Tensor& input, int s, std::pair<int, int> offset);

Tensor lcn_forward(const Tensor& input, const LcnParams& params);

std::vector<double> fc_forward(const Tensor& input, const FcWeights& fc);

/// Reshapes FC weights into a kernel bank so that valid convolution over a
/// feature map scores every window position at once. Requires a square input
/// window.
KernelBank fc_as_conv(const FcWeights& fc);

std::vector<double> softmax(const std::vector<double>& scores);

}  // namespace dcf
