#include "dcf/cost_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dcf/detector.hpp"
#include "dcf/fragments.hpp"
#include "dcf/oracle.hpp"

namespace dcf {

double flops_conv_patch(const LayerCostInput& in) {
  return 2.0 * in.A * in.pPrev * in.pCur * in.wl * in.wl * in.sl;
}

double flops_conv_image(const LayerCostInput& in) {
  return 2.0 * in.Al * in.pPrev * in.pCur * in.Fl * in.sl;
}

double flops_conv_dcf(const LayerCostInput& in, DcfLogVariant variant) {
  const double nz = in.sparsityRatio * in.Al;
  if (nz <= 0.0) return 0.0;
  const double logArg = (variant == DcfLogVariant::NonzeroOnly) ? nz : in.Al;
  return 2.0 * nz * std::log(logArg) * in.pPrev * in.pCur * in.Fl;
}

double flops_fc_patch(const LayerCostInput& in) {
  return 2.0 * in.A * in.pPrev * in.pCur * in.sl;
}

double flops_fc_image(const LayerCostInput& in) { return 2.0 * in.A * in.Fl * in.sl; }

double flops_fc_dcf(const LayerCostInput& in, DcfLogVariant variant) {
  const double nz = in.sparsityRatio * in.Al;
  if (nz <= 0.0) return 0.0;
  const double logArg = (variant == DcfLogVariant::NonzeroOnly) ? nz : in.Al;
  return 2.0 * nz * std::log(logArg) * 2.0 * in.Fl;
}

double scaled_flops(const std::string& method, bool isConv, double flops, int scaleCount) {
  if (method == "dcf" && isConv) return flops;  // features extracted once
  return flops * scaleCount;
}

double total_from_values(const std::vector<double>& perLayer, const std::vector<bool>& isConv,
                         const std::string& method, int scaleCount) {
  if (perLayer.size() != isConv.size())
    throw std::invalid_argument("per-layer value/kind lists differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < perLayer.size(); ++i)
    total += scaled_flops(method, isConv[i], perLayer[i], scaleCount);
  return total;
}

std::vector<LayerCostInput> reference_cost_inputs(int imageWidth, int imageHeight,
                                                  double sparsityRatio) {
  const double A = static_cast<double>(imageWidth) * imageHeight;
  const double A4 = static_cast<double>(imageWidth / 2) * (imageHeight / 2);
  const double A7 = static_cast<double>(imageWidth / 4) * (imageHeight / 4);
  const bool reference = (imageWidth == 800 && imageHeight == 600);

  LayerCostInput l1;
  l1.label = "1";
  l1.isConv = true;
  l1.A = A;
  l1.Al = A;
  l1.sparsityRatio = sparsityRatio;
  l1.pPrev = 1;
  l1.pCur = 16;
  l1.wl = 30;  // published per-window map side for the first conv layer
  l1.sl = 25;
  l1.Fl = 1;
  if (reference) {
    l1.tablePatch = 34.56e10;
    l1.tableImage = 0.002e10;
    l1.tableDcf = 0.002e10;
  }

  LayerCostInput l4;
  l4.label = "4";
  l4.isConv = true;
  l4.A = A;
  l4.Al = A4;
  l4.sparsityRatio = sparsityRatio;
  l4.pPrev = 16;
  l4.pCur = 16;
  l4.wl = 16;
  l4.sl = 25;
  l4.Fl = 4;
  if (reference) {
    l4.tablePatch = 157.2864e10;
    l4.tableImage = 0.6144e10;
    l4.tableDcf = 0.135168e10;
  }

  LayerCostInput l7;
  l7.label = "7";
  l7.isConv = false;
  l7.A = A;
  l7.Al = A7;
  l7.sparsityRatio = sparsityRatio;
  l7.pPrev = 16;
  l7.pCur = 16;
  l7.wl = 0;
  l7.sl = 1024;
  l7.Fl = 16;
  if (reference) {
    l7.tablePatch = 0.98304e10;
    l7.tableImage = 0.98304e10;
    l7.tableDcf = 0.00096e10;
  }

  return {l1, l4, l7};
}

FlopsReport full_report(const std::vector<LayerCostInput>& inputs, int scaleCount,
                        DcfLogVariant variant) {
  FlopsReport report;
  std::vector<double> tablePatch, tableImage, tableDcf;
  std::vector<bool> kinds;
  bool haveTable = true;

  for (const LayerCostInput& in : inputs) {
    const double patch = in.isConv ? flops_conv_patch(in) : flops_fc_patch(in);
    const double image = in.isConv ? flops_conv_image(in) : flops_fc_image(in);
    const double dcf = in.isConv ? flops_conv_dcf(in, variant) : flops_fc_dcf(in, variant);
    const DcfLogVariant other =
        variant == DcfLogVariant::NonzeroOnly ? DcfLogVariant::FullMap : DcfLogVariant::NonzeroOnly;
    const double dcfAlt = in.isConv ? flops_conv_dcf(in, other) : flops_fc_dcf(in, other);

    report.cells.push_back({"patch", in.label, patch, scaled_flops("patch", in.isConv, patch, scaleCount)});
    report.cells.push_back({"image", in.label, image, scaled_flops("image", in.isConv, image, scaleCount)});
    report.cells.push_back({"dcf", in.label, dcf, scaled_flops("dcf", in.isConv, dcf, scaleCount)});
    report.cells.push_back(
        {variant == DcfLogVariant::NonzeroOnly ? "dcf_ln_full" : "dcf_ln_nonzero", in.label, dcfAlt,
         scaled_flops("dcf", in.isConv, dcfAlt, scaleCount)});

    // Reference cells ride along where known so disagreements stay visible.
    if (in.tablePatch >= 0.0)
      report.cells.push_back(
          {"table_patch", in.label, in.tablePatch, scaled_flops("patch", in.isConv, in.tablePatch, scaleCount)});
    if (in.tableImage >= 0.0)
      report.cells.push_back(
          {"table_image", in.label, in.tableImage, scaled_flops("image", in.isConv, in.tableImage, scaleCount)});
    if (in.tableDcf >= 0.0)
      report.cells.push_back(
          {"table_dcf", in.label, in.tableDcf, scaled_flops("dcf", in.isConv, in.tableDcf, scaleCount)});

    report.totalPatch += scaled_flops("patch", in.isConv, patch, scaleCount);
    report.totalImage += scaled_flops("image", in.isConv, image, scaleCount);
    report.totalDcf += scaled_flops("dcf", in.isConv, dcf, scaleCount);

    kinds.push_back(in.isConv);
    if (in.tablePatch < 0.0 || in.tableImage < 0.0 || in.tableDcf < 0.0) haveTable = false;
    tablePatch.push_back(in.tablePatch);
    tableImage.push_back(in.tableImage);
    tableDcf.push_back(in.tableDcf);
  }

  report.cells.push_back({"patch", "total", 0.0, report.totalPatch});
  report.cells.push_back({"image", "total", 0.0, report.totalImage});
  report.cells.push_back({"dcf", "total", 0.0, report.totalDcf});

  if (haveTable && !inputs.empty()) {
    report.tableTotalPatch = total_from_values(tablePatch, kinds, "patch", scaleCount);
    report.tableTotalImage = total_from_values(tableImage, kinds, "image", scaleCount);
    report.tableTotalDcf = total_from_values(tableDcf, kinds, "dcf", scaleCount);
    report.cells.push_back({"table_patch", "total", 0.0, report.tableTotalPatch});
    report.cells.push_back({"table_image", "total", 0.0, report.tableTotalImage});
    report.cells.push_back({"table_dcf", "total", 0.0, report.tableTotalDcf});
  }
  return report;
}

namespace {

std::string format_e10(double flops) {
  std::ostringstream os;
  os.precision(10);
  os << flops / 1e10;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

double max_fragment_prob(const FragmentSet& dcfs, const KernelBank& fcBank,
                         const std::vector<double>& scales, FftConvPlan* plan) {
  double best = 0.0;
  for (double scale : scales) {
    for (const Fragment& f : dcfs.fragments) {
      const int th = static_cast<int>(std::lround(f.map.height * scale));
      const int tw = static_cast<int>(std::lround(f.map.width * scale));
      if (th < fcBank.size || tw < fcBank.size) continue;
      const Tensor resized =
          (th == f.map.height && tw == f.map.width) ? f.map : nn_resize(f.map, th, tw);
      const Tensor all = plan ? plan->run(resized) : conv2d_direct(resized, fcBank, Padding::Valid);
      for (int m = 0; m < all.height; ++m) {
        for (int n = 0; n < all.width; ++n) {
          std::vector<double> sc(all.channels);
          for (int c = 0; c < all.channels; ++c) sc[c] = all.at(m, n, c);
          best = std::max(best, softmax(sc)[kFaceClass]);
        }
      }
    }
  }
  return best;
}

}  // namespace

std::string FlopsReport::to_csv() const {
  std::ostringstream os;
  os << "method,layer,flops_x1e10,scaled_x1e10\n";
  for (const FlopsCell& cell : cells)
    os << cell.method << "," << cell.layer << "," << format_e10(cell.flops) << ","
       << format_e10(cell.scaled) << "\n";
  return os.str();
}

std::vector<BenchResult> bench(const Tensor& image, const NetworkSpec& net,
                               const std::vector<std::string>& strategies,
                               const std::vector<double>& scales, int runs) {
  using clock = std::chrono::steady_clock;
  const int fcIdx = net.fc_layer_index();
  if (fcIdx < 0) throw std::invalid_argument("network has no FC layer");
  const KernelBank fcBank = fc_as_conv(net.layers[fcIdx].fc);

  std::vector<BenchResult> results;
  for (const std::string& strategy : strategies) {
    std::vector<double> times;
    double maxScore = 0.0;
    for (int run = 0; run < runs; ++run) {
      const auto t0 = clock::now();
      double best = 0.0;
      if (strategy == "patch") {
        for (double scale : scales) {
          const int sh = static_cast<int>(std::lround(image.height * scale));
          const int sw = static_cast<int>(std::lround(image.width * scale));
          if (sh < net.inputSide || sw < net.inputSide) continue;
          const Tensor resized =
              (sh == image.height && sw == image.width) ? image : nn_resize(image, sh, sw);
          for (int r = 0; r + net.inputSide <= sh; r += 4)
            for (int c = 0; c + net.inputSide <= sw; c += 4) {
              const Tensor patch = crop(resized, r, c, net.inputSide, net.inputSide);
              best = std::max(best, window_forward(patch, net, Padding::Same)[kFaceClass]);
            }
        }
      } else if (strategy == "image") {
        for (double scale : scales) {
          const int sh = static_cast<int>(std::lround(image.height * scale));
          const int sw = static_cast<int>(std::lround(image.width * scale));
          if (sh < net.inputSide || sw < net.inputSide) continue;
          const Tensor resized =
              (sh == image.height && sw == image.width) ? image : nn_resize(image, sh, sw);
          const FragmentSet dcfs = extract_dcfs(resized, net, Padding::Same);
          best = std::max(best, max_fragment_prob(dcfs, fcBank, {1.0}, nullptr));
        }
      } else if (strategy == "dcf") {
        const FragmentSet dcfs = extract_dcfs(image, net, Padding::Same);
        FftConvPlan plan(fcBank, Padding::Valid);
        best = max_fragment_prob(dcfs, fcBank, scales, &plan);
      } else {
        throw std::invalid_argument("unknown strategy: " + strategy);
      }
      const auto t1 = clock::now();
      times.push_back(std::chrono::duration<double>(t1 - t0).count());
      maxScore = best;
    }
    results.push_back({strategy, median(times), maxScore});
  }
  return results;
}

}  // namespace dcf
