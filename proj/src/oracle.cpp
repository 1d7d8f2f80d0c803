#include "dcf/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace dcf {

std::vector<double> window_forward(const Tensor& patch, const NetworkSpec& net, Padding padding) {
  Tensor x = patch;
  std::vector<double> scores;
  for (const LayerSpec& layer : net.layers) {
    switch (layer.kind) {
      case LayerKind::Conv:
        x = conv_layer_forward(x, layer.bank, padding);
        break;
      case LayerKind::Pool:
        x = maxpool_fragment(x, layer.poolSize, {0, 0});
        break;
      case LayerKind::Lcn:
        x = lcn_forward(x, layer.lcn);
        break;
      case LayerKind::Fc:
        scores = fc_forward(x, layer.fc);
        break;
      case LayerKind::Softmax:
        scores = softmax(scores);
        break;
    }
  }
  return scores;
}

Tensor patch_scores(const Tensor& image, const NetworkSpec& net, int windowSide, int stride,
                    Padding padding) {
  if (image.height < windowSide || image.width < windowSide)
    throw std::invalid_argument("image smaller than one window");
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  const int oh = (image.height - windowSide) / stride + 1;
  const int ow = (image.width - windowSide) / stride + 1;
  Tensor out(oh, ow, 1);
  for (int m = 0; m < oh; ++m) {
    for (int n = 0; n < ow; ++n) {
      const Tensor patch = crop(image, m * stride, n * stride, windowSide, windowSide);
      out.at(m, n, 0) = window_forward(patch, net, padding)[kFaceClass];
    }
  }
  return out;
}

EquivalenceReport equivalence_report(const Tensor& image, const NetworkSpec& net) {
  return equivalence_report(image, net, extract_dcfs(image, net, Padding::Valid));
}

EquivalenceReport equivalence_report(const Tensor& image, const NetworkSpec& net,
                                     const FragmentSet& dcfs) {
  const int fcIdx = net.fc_layer_index();
  if (fcIdx < 0) throw std::invalid_argument("network has no FC layer");
  const Tensor oracle = patch_scores(image, net, net.inputSide, 1, Padding::Valid);
  const KernelBank fcBank = fc_as_conv(net.layers[fcIdx].fc);

  EquivalenceReport report;
  for (const Fragment& f : dcfs.fragments) {
    if (f.map.height < fcBank.size || f.map.width < fcBank.size) continue;
    const Tensor scores = conv2d_direct(f.map, fcBank, Padding::Valid);
    for (int m = 0; m < scores.height; ++m) {
      for (int n = 0; n < scores.width; ++n) {
        const int a = f.geometry.cumulativeStride * m + f.geometry.cumulativeOffset.first;
        const int b = f.geometry.cumulativeStride * n + f.geometry.cumulativeOffset.second;
        if (a < 0 || b < 0 || a >= oracle.height || b >= oracle.width) continue;
        std::vector<double> sc(scores.channels);
        for (int c = 0; c < scores.channels; ++c) sc[c] = scores.at(m, n, c);
        const double prob = softmax(sc)[kFaceClass];
        const double diff = std::fabs(prob - oracle.at(a, b, 0));
        ++report.positionsCompared;
        if (diff > report.maxAbsDiff) {
          report.maxAbsDiff = diff;
          report.worstPath = f.path;
          report.worstRow = m;
          report.worstCol = n;
        }
      }
    }
  }
  return report;
}

}  // namespace dcf
