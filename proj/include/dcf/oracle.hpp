#pragma once

#include "dcf/fragments.hpp"
#include "dcf/layers.hpp"
#include "dcf/tensor.hpp"

namespace dcf {

/// Plain forward pass of the full stack on one model-window patch, using
/// conventional offset-(0,0) pooling. Returns the softmax probabilities.
std::vector<double> window_forward(const Tensor& patch, const NetworkSpec& net, Padding padding);

/// Brute-force baseline: runs the full network independently on every window
/// crop at the given stride and records the face-class probability. Slow by
/// design; everything fast is checked against it.
Tensor patch_scores(const Tensor& image, const NetworkSpec& net, int windowSide, int stride,
                    Padding padding);

struct EquivalenceReport {
  double maxAbsDiff = 0.0;
  long positionsCompared = 0;
  OffsetPath worstPath;
  int worstRow = 0;
  int worstCol = 0;
};

/// Compares stride-1 patch scores against the union of all fragment response
/// maps mapped through their geometry. Valid padding only; the fragments may
/// be supplied explicitly (fault-injection hooks use that).
EquivalenceReport equivalence_report(const Tensor& image, const NetworkSpec& net);
EquivalenceReport equivalence_report(const Tensor& image, const NetworkSpec& net,
                                     const FragmentSet& dcfs);

}  // namespace dcf
