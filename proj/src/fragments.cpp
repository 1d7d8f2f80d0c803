#include "dcf/fragments.hpp"

#include <stdexcept>
#include <string>

namespace dcf {

const Fragment* FragmentSet::find(const OffsetPath& path) const {
  for (const Fragment& f : fragments)
    if (f.path == path) return &f;
  return nullptr;
}

FragmentGeometry fragment_geometry(const OffsetPath& path, const std::vector<int>& poolSizes,
                                   int windowSide) {
  if (path.size() != poolSizes.size())
    throw std::invalid_argument("offset path length " + std::to_string(path.size()) +
                                " does not match pooling layer count " +
                                std::to_string(poolSizes.size()));
  FragmentGeometry geo;
  geo.offsetPath = path;
  geo.windowSide = windowSide;
  int stride = 1;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const int s = poolSizes[i];
    if (path[i].first < 0 || path[i].first >= s || path[i].second < 0 || path[i].second >= s)
      throw std::invalid_argument("offset (" + std::to_string(path[i].first) + "," +
                                  std::to_string(path[i].second) + ") out of range for pool size " +
                                  std::to_string(s));
    geo.cumulativeOffset.first += path[i].first * stride;
    geo.cumulativeOffset.second += path[i].second * stride;
    stride *= s;
  }
  geo.cumulativeStride = stride;
  return geo;
}

FragmentSet extract_dcfs(const Tensor& image, const NetworkSpec& net, Padding padding,
                         ConvBackend backend) {
  net.validate(padding);
  if (image.channels != net.inputChannels)
    throw std::invalid_argument("image has " + std::to_string(image.channels) +
                                " channels, network expects " + std::to_string(net.inputChannels));
  if (image.height < net.inputSide || image.width < net.inputSide)
    throw std::invalid_argument("image " + std::to_string(image.height) + "x" +
                                std::to_string(image.width) + " smaller than required minimum " +
                                std::to_string(net.inputSide) + "x" + std::to_string(net.inputSide));

  struct Pending {
    Tensor map;
    OffsetPath path;
  };
  std::vector<Pending> live;
  live.push_back({image, {}});

  std::vector<int> poolSizes;
  for (const LayerSpec& layer : net.layers) {
    if (layer.kind == LayerKind::Fc || layer.kind == LayerKind::Softmax) break;
    switch (layer.kind) {
      case LayerKind::Conv:
        for (Pending& p : live) p.map = conv_layer_forward(p.map, layer.bank, padding, backend);
        break;
      case LayerKind::Lcn:
        for (Pending& p : live) p.map = lcn_forward(p.map, layer.lcn);
        break;
      case LayerKind::Pool: {
        poolSizes.push_back(layer.poolSize);
        std::vector<Pending> next;
        next.reserve(live.size() * static_cast<std::size_t>(layer.poolSize) * layer.poolSize);
        for (const Pending& p : live) {
          for (const PoolOffset& off : enumerate_offsets(layer.poolSize)) {
            OffsetPath path = p.path;
            path.push_back(off);
            next.push_back({maxpool_fragment(p.map, layer.poolSize, off), std::move(path)});
          }
        }
        live = std::move(next);
        break;
      }
      default:
        break;
    }
  }

  FragmentSet set;
  set.sourceHeight = image.height;
  set.sourceWidth = image.width;
  set.poolSizes = poolSizes;
  set.windowSide = net.inputSide;
  set.fragments.reserve(live.size());
  for (Pending& p : live) {
    Fragment f;
    f.geometry = fragment_geometry(p.path, poolSizes, net.inputSide);
    f.path = std::move(p.path);
    f.map = std::move(p.map);
    set.fragments.push_back(std::move(f));
  }
  return set;
}

}  // namespace dcf
