#pragma once

#include <utility>
#include <vector>

#include "dcf/layers.hpp"
#include "dcf/tensor.hpp"

namespace dcf {

using PoolOffset = std::pair<int, int>;
using OffsetPath = std::vector<PoolOffset>;

/// Image-coordinate geometry of one fragment: how many pixels one feature-map
/// step covers and where cell (0,0) sits in the source image.
struct FragmentGeometry {
  OffsetPath offsetPath;
  int cumulativeStride = 1;
  PoolOffset cumulativeOffset{0, 0};
  int windowSide = 0;
};

struct Fragment {
  OffsetPath path;
  Tensor map;
  FragmentGeometry geometry;
};

/// The complete feature maps: one fragment per combination of pooling
/// offsets, with geometry for backprojection.
struct FragmentSet {
  std::vector<Fragment> fragments;
  int sourceHeight = 0;
  int sourceWidth = 0;
  std::vector<int> poolSizes;
  int windowSide = 0;

  const Fragment* find(const OffsetPath& path) const;
};

/// Resolves a pooling-offset path to image coordinates. The stride is the
/// product of the pool sizes; each offset contributes scaled by the strides
/// accumulated before its pooling layer.
FragmentGeometry fragment_geometry(const OffsetPath& path, const std::vector<int>& poolSizes,
                                   int windowSide);

/// Runs the layer stack over the whole image, splitting every fragment into
/// all pooling offsets at each pooling layer. Stops before the FC layer.
FragmentSet extract_dcfs(const Tensor& image, const NetworkSpec& net, Padding padding,
                         ConvBackend backend = ConvBackend::Direct);

}  // namespace dcf
