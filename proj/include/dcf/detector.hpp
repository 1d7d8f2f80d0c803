#pragma once

#include <utility>
#include <vector>

#include "dcf/fragments.hpp"
#include "dcf/layers.hpp"
#include "dcf/tensor.hpp"

namespace dcf {

/// Score map over one (possibly resized) fragment. scores has one channel;
/// cell (m, n) is the classifier output for the window whose top-left feature
/// cell is (m, n).
struct ResponseMap {
  Tensor scores;
  double scale = 1.0;
  OffsetPath offsetPath;
  FragmentGeometry geometry;
};

/// Axis-aligned box in original-image pixels.
struct Detection {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double score = 0.0;
  double scale = 1.0;
};

double iou(const Detection& a, const Detection& b);

/// Two-stage box refiner: hidden ReLU layer (100 units) then 4 outputs
/// (dx, dy, dw, dh) in window-relative units.
struct RegressorWeights {
  FcWeights hidden;
  FcWeights output;
};

struct DetectorConfig {
  std::vector<double> scales{1.25, 1.0, 0.8, 0.64, 0.512};
  double tau = 0.5;
  double iouThreshold = 0.3;
  ConvBackend scoringBackend = ConvBackend::Direct;
};

/// Valid convolution of the reshaped FC bank over one fragment, keeping the
/// chosen class channel. scale only annotates the result; resize beforehand.
ResponseMap score_fragment(const Fragment& fragment, const KernelBank& fcBank, int classIndex,
                           double scale = 1.0, ConvBackend backend = ConvBackend::Direct);

struct MultiscaleResult {
  std::vector<ResponseMap> maps;
  int skipped = 0;  // fragment/scale pairs smaller than the FC window
};

/// Resizes every fragment to each scale and scores it. Raw class scores, one
/// map per surviving (fragment, scale) pair.
MultiscaleResult multiscale_responses(const FragmentSet& dcfs, const std::vector<double>& scales,
                                      const KernelBank& fcBank, int classIndex,
                                      ConvBackend backend = ConvBackend::Direct);

struct Peak {
  int row = 0;
  int col = 0;
  double score = 0.0;
};

/// Thresholds the map at tau, labels 8-connected components and returns one
/// candidate per component: rounded centroid position, component max score.
std::vector<Peak> peaks(const ResponseMap& map, double tau);

/// Maps a response-map position back to an image-space window box. The box
/// is clipped to the image bounds when they are given.
Detection backproject(std::pair<int, int> position, const FragmentGeometry& geometry, double scale,
                      int imageHeight = 0, int imageWidth = 0);

/// Greedy non-maximum suppression at the given IoU threshold. Ties in score
/// break by x, then y, then scale, ascending.
std::vector<Detection> nms(std::vector<Detection> dets, double iouThreshold);

/// Number of model instances needed to push the error below the target:
/// ceil(ln(H) / ln(R)).
int ensemble_size(double R, double H);

struct EnsembleDecision {
  std::vector<char> keep;
  std::vector<double> score;  // min across models, meaningful where keep
};

/// Conjunction rule over per-model probabilities for one shared candidate
/// list: a candidate survives iff every model is above tau; the combined
/// score is the minimum.
EnsembleDecision ensemble_combine(const std::vector<std::vector<double>>& perModelScores,
                                  double tau);

/// Applies the two-stage regressor to the window features and shifts the
/// proposal by the predicted deltas, clipping to the image.
Detection regress_box(const Tensor& windowFeatures, const RegressorWeights& reg,
                      const Detection& proposal, int imageHeight, int imageWidth);

/// Crops the proposal region, resizes it to the model window and runs the
/// stack up to the FC input. These are the features the regressor consumes.
Tensor window_features(const Tensor& image, const NetworkSpec& net, const Detection& box);

/// Full pipeline: extract fragments per model, score all scales, pick peaks,
/// backproject, gate through the ensemble, refine, suppress.
std::vector<Detection> detect(const Tensor& image, const std::vector<NetworkSpec>& models,
                              const RegressorWeights* regressor, const DetectorConfig& config);

}  // namespace dcf
