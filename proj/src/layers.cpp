#include "dcf/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rng.hpp"

namespace dcf {

FcWeights::FcWeights(int outCount_, int inHeight_, int inWidth_, int inChannels_)
    : outCount(outCount_), inHeight(inHeight_), inWidth(inWidth_), inChannels(inChannels_),
      weights(static_cast<std::size_t>(outCount_) * inHeight_ * inWidth_ * inChannels_, 0.0),
      biases(static_cast<std::size_t>(outCount_), 0.0) {
  if (outCount_ <= 0 || inHeight_ <= 0 || inWidth_ <= 0 || inChannels_ <= 0)
    throw std::invalid_argument("FcWeights dimensions must be positive");
}

std::vector<int> NetworkSpec::pool_sizes() const {
  std::vector<int> sizes;
  for (const LayerSpec& l : layers)
    if (l.kind == LayerKind::Pool) sizes.push_back(l.poolSize);
  return sizes;
}

int NetworkSpec::fc_layer_index() const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::Fc) return static_cast<int>(i);
  return -1;
}

void NetworkSpec::validate(Padding padding) const {
  if (inputSide <= 0 || inputChannels <= 0)
    throw std::invalid_argument("network input geometry not set");
  int side = inputSide;
  int ch = inputChannels;
  bool pastFc = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::Conv:
        if (pastFc) throw std::invalid_argument("conv layer after FC");
        if (l.bank.inChannels != ch)
          throw std::invalid_argument("layer " + std::to_string(i) + " expects " +
                                      std::to_string(l.bank.inChannels) + " channels, got " +
                                      std::to_string(ch));
        if (padding == Padding::Valid) side -= l.bank.size - 1;
        if (side < 1) throw std::invalid_argument("window too small for layer " + std::to_string(i));
        ch = l.bank.count;
        break;
      case LayerKind::Pool:
        if (pastFc || l.poolSize < 1 || side < l.poolSize)
          throw std::invalid_argument("bad pooling at layer " + std::to_string(i));
        side /= l.poolSize;
        break;
      case LayerKind::Lcn:
        if (l.lcn.kappa <= 0.0 || l.lcn.beta <= 0.0 || l.lcn.r < 1)
          throw std::invalid_argument("bad LCN parameters at layer " + std::to_string(i));
        break;
      case LayerKind::Fc:
        if (l.fc.inHeight != side || l.fc.inWidth != side || l.fc.inChannels != ch)
          throw std::invalid_argument("FC geometry " + std::to_string(l.fc.inHeight) + "x" +
                                      std::to_string(l.fc.inWidth) + "x" +
                                      std::to_string(l.fc.inChannels) + " does not match feature maps " +
                                      std::to_string(side) + "x" + std::to_string(side) + "x" +
                                      std::to_string(ch));
        pastFc = true;
        ch = l.fc.outCount;
        break;
      case LayerKind::Softmax:
        break;
    }
  }
}

NetworkSpec reference_net(std::uint32_t seed, Padding padding) {
  std::mt19937 gen(seed);
  auto fill_gauss = [&gen](std::vector<double>& v, double std) {
    for (double& x : v) x = detail::gauss(gen) * std;
  };

  NetworkSpec net;
  net.inputSide = 32;
  net.inputChannels = 1;

  LayerSpec conv1;
  conv1.kind = LayerKind::Conv;
  conv1.bank = KernelBank(16, 5, 1);
  fill_gauss(conv1.bank.weights, 0.28);  // ~sqrt(2/fan_in), fan_in 25
  conv1.hyper = {0.0030, 0.0040, 0.9000, 0.9000, 0.0000};
  net.layers.push_back(std::move(conv1));

  LayerSpec pool2;
  pool2.kind = LayerKind::Pool;
  pool2.poolSize = 2;
  net.layers.push_back(pool2);

  LayerSpec lcn3;
  lcn3.kind = LayerKind::Lcn;
  lcn3.lcn = LcnParams{1.0, 0.001, 0.75, 5};
  net.layers.push_back(lcn3);

  LayerSpec conv4;
  conv4.kind = LayerKind::Conv;
  conv4.bank = KernelBank(16, 5, 16);
  fill_gauss(conv4.bank.weights, 0.07);  // fan_in 400
  conv4.hyper = {0.0001, 0.0002, 0.9000, 0.9000, 0.0000};
  net.layers.push_back(std::move(conv4));

  LayerSpec lcn5 = lcn3;
  net.layers.push_back(lcn5);

  LayerSpec pool6 = pool2;
  net.layers.push_back(pool6);

  const int fcSide = (padding == Padding::Same) ? 8 : 5;
  LayerSpec fc7;
  fc7.kind = LayerKind::Fc;
  fc7.fc = FcWeights(2, fcSide, fcSide, 16);
  fill_gauss(fc7.fc.weights, 0.04);
  fc7.hyper = {0.0002, 0.0003, 0.9000, 0.9000, 0.0100};
  net.layers.push_back(std::move(fc7));

  LayerSpec sm;
  sm.kind = LayerKind::Softmax;
  net.layers.push_back(sm);

  net.validate(padding);
  return net;
}

int fragment_count_at(const NetworkSpec& net, int layerIndex) {
  int count = 1;
  for (int i = 0; i < layerIndex && i < static_cast<int>(net.layers.size()); ++i)
    if (net.layers[i].kind == LayerKind::Pool)
      count *= net.layers[i].poolSize * net.layers[i].poolSize;
  return count;
}

Tensor conv_layer_forward(const Tensor& input, const KernelBank& bank, Padding padding,
                          ConvBackend backend) {
  Tensor z = (backend == ConvBackend::Fft) ? conv2d_fft(input, bank, padding)
                                           : conv2d_direct(input, bank, padding);
  return relu(z);
}

std::vector<std::pair<int, int>> enumerate_offsets(int s) {
  if (s < 1) throw std::invalid_argument("pool size must be >= 1");
  std::vector<std::pair<int, int>> offsets;
  offsets.reserve(static_cast<std::size_t>(s) * s);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) offsets.emplace_back(i, j);
  return offsets;
}

Tensor maxpool_fragment(const Tensor& input, int s, std::pair<int, int> offset) {
  if (s < 1) throw std::invalid_argument("pool size must be >= 1");
  if (offset.first < 0 || offset.first >= s || offset.second < 0 || offset.second >= s)
    throw std::invalid_argument("pool offset out of range for size " + std::to_string(s));
  const int oh = (input.height - offset.first) / s;
  const int ow = (input.width - offset.second) / s;
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("input " + std::to_string(input.height) + "x" +
                                std::to_string(input.width) +
                                " holds no complete pooling tile at offset (" +
                                std::to_string(offset.first) + "," + std::to_string(offset.second) +
                                ") with size " + std::to_string(s));
  Tensor out(oh, ow, input.channels);
  for (int m = 0; m < oh; ++m) {
    for (int n = 0; n < ow; ++n) {
      const int r0 = offset.first + s * m;
      const int c0 = offset.second + s * n;
      for (int ch = 0; ch < input.channels; ++ch) {
        double best = input.at(r0, c0, ch);
        for (int u = 0; u < s; ++u)
          for (int v = 0; v < s; ++v) best = std::max(best, input.at(r0 + u, c0 + v, ch));
        out.at(m, n, ch) = best;
      }
    }
  }
  return out;
}

Tensor lcn_forward(const Tensor& input, const LcnParams& params) {
  if (params.kappa <= 0.0 || params.beta <= 0.0 || params.r < 1)
    throw std::invalid_argument("LCN parameters require kappa > 0, beta > 0, r >= 1");
  const int half = params.r / 2;
  const int ch = input.channels;
  Tensor out(input.height, input.width, ch);
  for (int m = 0; m < input.height; ++m) {
    for (int n = 0; n < input.width; ++n) {
      const double* x = &input.values[(static_cast<std::size_t>(m) * input.width + n) * ch];
      double* y = &out.values[(static_cast<std::size_t>(m) * input.width + n) * ch];
      for (int j = 0; j < ch; ++j) {
        const int lo = std::max(0, j - half);
        const int hi = std::min(ch - 1, j + half);
        double sum = 0.0;
        for (int i = lo; i <= hi; ++i) sum += x[i] * x[i];
        y[j] = x[j] * detail::pow_neg(params.kappa + params.alpha * sum, params.beta);
      }
    }
  }
  return out;
}

std::vector<double> fc_forward(const Tensor& input, const FcWeights& fc) {
  if (input.height != fc.inHeight || input.width != fc.inWidth || input.channels != fc.inChannels)
    throw std::invalid_argument("FC input geometry mismatch: got " + std::to_string(input.height) +
                                "x" + std::to_string(input.width) + "x" +
                                std::to_string(input.channels) + ", expected " +
                                std::to_string(fc.inHeight) + "x" + std::to_string(fc.inWidth) +
                                "x" + std::to_string(fc.inChannels));
  const std::size_t len = static_cast<std::size_t>(fc.inputLength());
  std::vector<double> scores(fc.outCount);
  for (int o = 0; o < fc.outCount; ++o) {
    const double* w = &fc.weights[static_cast<std::size_t>(o) * len];
    double acc = fc.biases[o];
    for (std::size_t t = 0; t < len; ++t) acc += w[t] * input.values[t];
    scores[o] = acc;
  }
  return scores;
}

KernelBank fc_as_conv(const FcWeights& fc) {
  if (fc.inHeight != fc.inWidth)
    throw std::invalid_argument("fc_as_conv requires a square window, got " +
                                std::to_string(fc.inHeight) + "x" + std::to_string(fc.inWidth));
  KernelBank bank(fc.outCount, fc.inHeight, fc.inChannels);
  // FC rows flatten (row, column, channel); the bank stores (out, row,
  // column, in), so the layouts coincide.
  bank.weights = fc.weights;
  bank.biases = fc.biases;
  return bank;
}

std::vector<double> softmax(const std::vector<double>& scores) {
  if (scores.empty()) return {};
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace dcf
