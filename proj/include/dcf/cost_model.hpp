#pragma once

#include <string>
#include <vector>

#include "dcf/layers.hpp"
#include "dcf/tensor.hpp"

namespace dcf {

/// Inputs for one costed layer. A is the image pixel count, Al the
/// feature-map pixel count at the layer, sl the kernel area for conv layers
/// and the FC input length for the FC layer, Fl the live fragment count, wl
/// the per-window feature-map side used by the patch formula.
struct LayerCostInput {
  std::string label;
  bool isConv = true;
  double A = 0.0;
  double Al = 0.0;
  double sparsityRatio = 0.5;
  double pPrev = 0.0;
  double pCur = 0.0;
  double wl = 0.0;
  double sl = 0.0;
  double Fl = 0.0;
  // Reference values from the published comparison (raw flops), < 0 if none.
  double tablePatch = -1.0;
  double tableImage = -1.0;
  double tableDcf = -1.0;
};

/// Which pixel count feeds the log factor of the frequency-domain cost:
/// the full map (formula-literal) or only its nonzero part (the variant that
/// reconciles with the published numbers).
enum class DcfLogVariant { FullMap, NonzeroOnly };

double flops_conv_patch(const LayerCostInput& in);
double flops_conv_image(const LayerCostInput& in);
double flops_conv_dcf(const LayerCostInput& in, DcfLogVariant variant = DcfLogVariant::NonzeroOnly);
double flops_fc_patch(const LayerCostInput& in);
double flops_fc_image(const LayerCostInput& in);
double flops_fc_dcf(const LayerCostInput& in, DcfLogVariant variant = DcfLogVariant::FullMap);

struct FlopsCell {
  std::string method;
  std::string layer;
  double flops = 0.0;   // raw flops for one scale
  double scaled = 0.0;  // after the per-method scale-count rule
};

struct FlopsReport {
  std::vector<FlopsCell> cells;
  double totalPatch = 0.0;
  double totalImage = 0.0;
  double totalDcf = 0.0;
  // Totals recomputed from the reference per-layer values, when present.
  double tableTotalPatch = -1.0;
  double tableTotalImage = -1.0;
  double tableTotalDcf = -1.0;

  /// CSV with one header line; flops columns are in units of 1e10.
  std::string to_csv() const;
};

/// Scale-count rules: the patch and image methods redo every layer per
/// detection scale; the frequency-domain method extracts features once and
/// only rescans the classifier, so conv layers stay unscaled.
double scaled_flops(const std::string& method, bool isConv, double flops, int scaleCount);

/// Per-layer totals under the same scaling rules, for feeding published
/// per-layer values through the pipeline.
double total_from_values(const std::vector<double>& perLayer, const std::vector<bool>& isConv,
                         const std::string& method, int scaleCount);

/// Cost inputs of the reference architecture for a given image size. The
/// published reference values attach when the size is 800x600.
std::vector<LayerCostInput> reference_cost_inputs(int imageWidth, int imageHeight,
                                                  double sparsityRatio = 0.5);

FlopsReport full_report(const std::vector<LayerCostInput>& inputs, int scaleCount,
                        DcfLogVariant variant = DcfLogVariant::NonzeroOnly);

struct BenchResult {
  std::string strategy;
  double medianSeconds = 0.0;
  double maxScore = 0.0;  // top face probability seen, for agreement checks
};

/// Wall-clock comparison of the three evaluation strategies on one image.
/// patch: full net per window (stride 4) over an image pyramid. image:
/// fragment extraction plus direct scoring per pyramid level. dcf: one
/// extraction, fragments resized per scale and scored through the FFT path.
std::vector<BenchResult> bench(const Tensor& image, const NetworkSpec& net,
                               const std::vector<std::string>& strategies,
                               const std::vector<double>& scales, int runs = 5);

}  // namespace dcf
