// dcfdet: train, run and inspect the fragment-based sliding-window detector.
// Machine-readable payload goes to stdout, diagnostics to stderr.
// Exit codes: 0 ok, 2 invalid config key, 3 corrupt weight file, 4 model
// geometry mismatch.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dcf/cost_model.hpp"
#include "dcf/detector.hpp"
#include "dcf/fragments.hpp"
#include "dcf/io.hpp"
#include "dcf/oracle.hpp"
#include "dcf/trainer.hpp"

namespace {

std::vector<double> parse_scale_list(const std::string& text) {
  std::vector<double> scales;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) scales.push_back(std::stod(item));
  }
  if (scales.empty()) throw std::invalid_argument("empty scale list");
  return scales;
}

std::pair<int, int> parse_size(const std::string& text) {
  const std::size_t x = text.find('x');
  if (x == std::string::npos) throw std::invalid_argument("size must look like WxH");
  return {std::stoi(text.substr(0, x)), std::stoi(text.substr(x + 1))};
}

std::string ensemble_path(const std::string& base, int index) {
  if (index == 1) return base;
  const std::size_t dot = base.rfind('.');
  if (dot == std::string::npos || base.find('/', dot) != std::string::npos)
    return base + "." + std::to_string(index);
  return base.substr(0, dot) + "." + std::to_string(index) + base.substr(dot);
}

dcf::SyntheticDataset load_dataset_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  dcf::SyntheticDataset ds;
  for (const char* sub : {"neg", "pos"}) {
    const int label = std::string(sub) == "pos" ? 1 : 0;
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(dir) / sub))
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    for (const std::string& f : files) {
      dcf::Sample s;
      s.image = dcf::read_pgm(f);
      if (s.image.height != 32 || s.image.width != 32)
        throw dcf::IoError(dcf::IoErrorKind::Corrupt, "training image " + f + " is not 32x32");
      s.label = label;
      ds.samples.push_back(std::move(s));
    }
  }
  if (ds.samples.empty())
    throw dcf::IoError(dcf::IoErrorKind::Unreadable, "no training images under " + dir);
  return ds;
}

void dump_dataset(const dcf::SyntheticDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "pos");
  fs::create_directories(fs::path(dir) / "neg");
  int counts[2] = {0, 0};
  for (const dcf::Sample& s : ds.samples) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05d.pgm", counts[s.label]++);
    dcf::write_pgm(s.image, (fs::path(dir) / (s.label ? "pos" : "neg") / name).string());
  }
}

int cmd_train(const std::string& data, const std::string& outPath, const std::string& configPath,
              int ensembleCount, const std::string& regressorOut, const std::string& dumpDir) {
  dcf::TrainConfig cfg;
  int datasetCount = 6000;
  int trainCount = -1;
  if (!configPath.empty()) {
    const std::set<std::string> known{"epochs", "batch", "target_precision", "dataset_count",
                                      "train_count", "seed"};
    const auto values = dcf::parse_config_file(configPath, known);
    if (values.count("epochs")) cfg.maxEpochs = static_cast<int>(values.at("epochs"));
    if (values.count("batch")) cfg.batchSize = static_cast<int>(values.at("batch"));
    if (values.count("target_precision")) cfg.targetPrecision = values.at("target_precision");
    if (values.count("dataset_count")) datasetCount = static_cast<int>(values.at("dataset_count"));
    if (values.count("train_count")) trainCount = static_cast<int>(values.at("train_count"));
    if (values.count("seed")) cfg.seed = static_cast<std::uint32_t>(values.at("seed"));
  }

  dcf::SyntheticDataset dataset;
  if (data.rfind("synthetic:", 0) == 0) {
    cfg.seed = static_cast<std::uint32_t>(std::stoul(data.substr(10)));
    dataset = dcf::generate_dataset(cfg.seed, datasetCount);
  } else {
    dataset = load_dataset_dir(data);
  }
  if (trainCount < 0) trainCount = static_cast<int>(dataset.samples.size() * 5 / 6);
  if (trainCount >= static_cast<int>(dataset.samples.size()))
    trainCount = static_cast<int>(dataset.samples.size()) - 1;
  if (!dumpDir.empty()) dump_dataset(dataset, dumpDir);

  for (int m = 1; m <= ensembleCount; ++m) {
    dcf::TrainConfig mcfg = cfg;
    mcfg.seed = cfg.seed + static_cast<std::uint32_t>(m - 1);
    const dcf::TrainResult result =
        dcf::train(mcfg, dataset, trainCount, dcf::reference_net(mcfg.seed, dcf::Padding::Same));
    const std::string path = ensemble_path(outPath, m);
    dcf::save_network(result.net, path);
    std::printf("precision %.4f\n", result.validationPrecision);
    std::fprintf(stderr, "model %d: %s (%d epochs, validation precision %.4f)\n", m, path.c_str(),
                 result.epochsRun, result.validationPrecision);
  }

  if (!regressorOut.empty()) {
    const dcf::NetworkSpec net = dcf::load_network(ensemble_path(outPath, 1));
    const auto cases = dcf::make_proposal_cases(cfg.seed + 100, 400, net);
    const auto reg = dcf::train_regressor(dcf::RegressorConfig{}, cases);
    dcf::save_regressor(reg.weights, regressorOut);
    std::fprintf(stderr, "regressor: %s (MSE %.5f -> %.5f)\n", regressorOut.c_str(),
                 reg.mseCurve.front(), reg.mseCurve.back());
  }
  return 0;
}

int cmd_detect(const std::vector<std::string>& modelPaths, const std::string& imagePath,
               const std::string& scalesText, double tau, double iouThr,
               const std::string& regressorPath, const std::string& heatmapPath) {
  std::vector<dcf::NetworkSpec> models;
  for (const std::string& p : modelPaths) models.push_back(dcf::load_network(p));
  const dcf::Tensor image = dcf::read_pgm(imagePath);

  dcf::DetectorConfig config;
  config.scales = parse_scale_list(scalesText);
  config.tau = tau;
  config.iouThreshold = iouThr;

  dcf::RegressorWeights reg;
  const bool haveReg = !regressorPath.empty();
  if (haveReg) reg = dcf::load_regressor(regressorPath);

  const std::vector<dcf::Detection> dets =
      dcf::detect(image, models, haveReg ? &reg : nullptr, config);
  std::cout << dcf::format_detections(dets);

  if (!heatmapPath.empty()) {
    // Merged response map: per pixel, the best window probability whose
    // backprojected center lands there, over all fragments and scales.
    dcf::Tensor heat(image.height, image.width, 1, 0.0);
    const dcf::NetworkSpec& net = models.front();
    const dcf::KernelBank fcBank = dcf::fc_as_conv(net.layers[net.fc_layer_index()].fc);
    const dcf::FragmentSet dcfs = dcf::extract_dcfs(image, net, dcf::Padding::Same);
    const dcf::MultiscaleResult face =
        dcf::multiscale_responses(dcfs, config.scales, fcBank, dcf::kFaceClass);
    const dcf::MultiscaleResult background =
        dcf::multiscale_responses(dcfs, config.scales, fcBank, dcf::kBackgroundClass);
    for (std::size_t k = 0; k < face.maps.size(); ++k) {
      const dcf::ResponseMap& map = face.maps[k];
      for (int m = 0; m < map.scores.height; ++m) {
        for (int n = 0; n < map.scores.width; ++n) {
          const double margin = map.scores.at(m, n, 0) - background.maps[k].scores.at(m, n, 0);
          const double prob = 1.0 / (1.0 + std::exp(-margin));
          const dcf::Detection box =
              dcf::backproject({m, n}, map.geometry, map.scale, image.height, image.width);
          const int cy = std::min(image.height - 1,
                                  std::max(0, static_cast<int>(std::lround(box.y + box.h / 2))));
          const int cx = std::min(image.width - 1,
                                  std::max(0, static_cast<int>(std::lround(box.x + box.w / 2))));
          heat.at(cy, cx, 0) = std::max(heat.at(cy, cx, 0), prob);
        }
      }
    }
    dcf::write_pgm(heat, heatmapPath);
  }
  return 0;
}

int cmd_flops(const std::string& arch, const std::string& archFile, const std::string& sizeText,
              int scaleCount, double sparsityRatio) {
  std::vector<dcf::LayerCostInput> inputs;
  if (!archFile.empty()) {
    // Arch file: CSV lines label,kind,A,Al,pPrev,pCur,wl,sl,Fl
    std::ifstream in(archFile);
    if (!in) throw dcf::IoError(dcf::IoErrorKind::Unreadable, "cannot open " + archFile);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::stringstream ss(line);
      std::string field;
      std::vector<std::string> fields;
      while (std::getline(ss, field, ',')) fields.push_back(field);
      if (fields.size() != 9) throw std::invalid_argument("arch file line needs 9 fields");
      dcf::LayerCostInput li;
      li.label = fields[0];
      li.isConv = fields[1] == "conv";
      li.A = std::stod(fields[2]);
      li.Al = std::stod(fields[3]);
      li.pPrev = std::stod(fields[4]);
      li.pCur = std::stod(fields[5]);
      li.wl = std::stod(fields[6]);
      li.sl = std::stod(fields[7]);
      li.Fl = std::stod(fields[8]);
      li.sparsityRatio = sparsityRatio;
      inputs.push_back(li);
    }
  } else {
    if (arch != "table1" && arch != "default")
      throw std::invalid_argument("unknown architecture '" + arch + "', expected table1");
    const auto [w, h] = parse_size(sizeText);
    inputs = dcf::reference_cost_inputs(w, h, sparsityRatio);
  }
  const dcf::FlopsReport report = dcf::full_report(inputs, scaleCount);
  std::cout << report.to_csv();
  return 0;
}

int cmd_verify(std::uint32_t seed, const std::string& sizesText, bool injectFault) {
  std::vector<std::pair<int, int>> sizes;
  {
    std::stringstream ss(sizesText);
    std::string item;
    while (std::getline(ss, item, ',')) sizes.push_back(parse_size(item));
  }

  double worstEq = 0.0;
  std::mt19937 g(seed);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const auto [w, h] = sizes[i];
    dcf::NetworkSpec net =
        dcf::reference_net(seed + static_cast<std::uint32_t>(i) * 31u + 1u, dcf::Padding::Valid);
    dcf::Tensor image(h, w, 1);
    for (double& v : image.values) v = (g() % 10000) / 10000.0;
    dcf::FragmentSet dcfs = dcf::extract_dcfs(image, net, dcf::Padding::Valid);
    if (injectFault && dcfs.fragments.size() > 1)
      std::swap(dcfs.fragments.front().geometry.cumulativeOffset,
                dcfs.fragments.back().geometry.cumulativeOffset);
    const dcf::EquivalenceReport report = dcf::equivalence_report(image, net, dcfs);
    worstEq = std::max(worstEq, report.maxAbsDiff);
  }
  std::printf("equivalence_max_abs_diff %.3e\n", worstEq);

  // Finite-difference spot check on a small batch.
  dcf::NetworkSpec net = dcf::reference_net(seed + 977u, dcf::Padding::Same);
  const dcf::SyntheticDataset ds = dcf::generate_dataset(seed + 13u, 8);
  const dcf::Gradients grads = dcf::backward(net, ds.samples, dcf::Padding::Same);
  double worstGrad = 0.0;
  const double h = 1e-4;
  int checked = 0;
  for (std::size_t li = 0; li < net.layers.size() && checked < 60; ++li) {
    if (grads.layers[li].weights.empty()) continue;
    std::vector<double>* params = net.layers[li].kind == dcf::LayerKind::Conv
                                      ? &net.layers[li].bank.weights
                                      : &net.layers[li].fc.weights;
    for (int t = 0; t < 20 && checked < 60; ++t) {
      const std::size_t idx = g() % params->size();
      const double saved = (*params)[idx];
      (*params)[idx] = saved + h;
      const double lossPlus = dcf::batch_loss(net, ds.samples, dcf::Padding::Same);
      (*params)[idx] = saved - h;
      const double lossMinus = dcf::batch_loss(net, ds.samples, dcf::Padding::Same);
      (*params)[idx] = saved;
      const double numeric = (lossPlus - lossMinus) / (2 * h);
      const double analytic = grads.layers[li].weights[idx];
      worstGrad = std::max(worstGrad,
                           std::fabs(analytic - numeric) / std::max(1.0, std::fabs(analytic)));
      ++checked;
    }
  }
  std::printf("gradient_max_rel_err %.3e\n", worstGrad);

  const bool ok = worstEq <= 1e-6 && worstGrad <= 1e-3;
  if (!ok) std::fprintf(stderr, "verification failed\n");
  return ok ? 0 : 1;
}

int cmd_bench(const std::string& modelPath, const std::string& imagePath,
              const std::string& strategiesText, const std::string& scalesText, int runs) {
  const dcf::NetworkSpec net = dcf::load_network(modelPath);
  const dcf::Tensor image = dcf::read_pgm(imagePath);
  std::vector<std::string> strategies;
  if (strategiesText == "all") {
    strategies = {"patch", "image", "dcf"};
  } else {
    std::stringstream ss(strategiesText);
    std::string item;
    while (std::getline(ss, item, ',')) strategies.push_back(item);
  }
  const auto results = dcf::bench(image, net, strategies, parse_scale_list(scalesText), runs);
  std::cout << "strategy,median_seconds,max_score\n";
  for (const dcf::BenchResult& r : results)
    std::printf("%s,%.6f,%.6f\n", r.strategy.c_str(), r.medianSeconds, r.maxScore);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sliding-window detector on complete pooled feature maps"};
  app.require_subcommand(1);

  auto* trainCmd = app.add_subcommand("train", "Train classifier model(s) and optionally the box regressor");
  std::string trainData = "synthetic:42";
  std::string trainOut = "model.dcfw";
  std::string trainConfig;
  std::string regressorOut;
  std::string dumpDir;
  int ensembleCount = 1;
  trainCmd->add_option("--data", trainData, "Training data: synthetic:SEED or a directory with pos/ and neg/ PGMs");
  trainCmd->add_option("--out", trainOut, "Output weight file")->required();
  trainCmd->add_option("--config", trainConfig, "key=value config file");
  trainCmd->add_option("--ensemble", ensembleCount, "Number of models to train")->check(CLI::Range(1, 8));
  trainCmd->add_option("--regressor-out", regressorOut, "Also train and save the box regressor");
  trainCmd->add_option("--dump-data", dumpDir, "Export the training images as PGMs under DIR/pos and DIR/neg");

  auto* detectCmd = app.add_subcommand("detect", "Detect patterns in a PGM image");
  std::vector<std::string> modelPaths;
  std::string imagePath;
  std::string scalesText = "1.25,1.0,0.8,0.64,0.512";
  std::string regressorPath;
  std::string heatmapPath;
  double tau = 0.5;
  double iouThr = 0.3;
  detectCmd->add_option("--model", modelPaths, "Model weight file(s); several form an ensemble")->required();
  detectCmd->add_option("--image", imagePath, "Input PGM image")->required();
  detectCmd->add_option("--scales", scalesText, "Comma-separated feature-map scales");
  detectCmd->add_option("--tau", tau, "Probability threshold");
  detectCmd->add_option("--iou", iouThr, "Suppression IoU threshold");
  detectCmd->add_option("--regressor", regressorPath, "Box regressor weight file");
  detectCmd->add_option("--heatmap", heatmapPath, "Write the merged response map as a PGM");

  auto* flopsCmd = app.add_subcommand("flops", "Analytical cost report (CSV)");
  std::string arch = "table1";
  std::string archFile;
  std::string sizeText = "800x600";
  int scaleCount = 5;
  double sparsityRatio = 0.5;
  flopsCmd->add_option("--arch", arch, "Built-in architecture name");
  flopsCmd->add_option("--arch-file", archFile, "CSV layer description file");
  flopsCmd->add_option("--image-size", sizeText, "Image size WxH");
  flopsCmd->add_option("--scales", scaleCount, "Number of detection scales");
  flopsCmd->add_option("--sparsity", sparsityRatio, "Zero fraction of the feature maps");

  auto* verifyCmd = app.add_subcommand("verify", "Run the oracle equivalence and gradient checks");
  std::uint32_t verifySeed = 1;
  std::string sizesText = "40x40,44x44,48x48";
  bool injectFault = false;
  verifyCmd->add_option("--seed", verifySeed, "Randomization seed");
  verifyCmd->add_option("--sizes", sizesText, "Comma-separated image sizes WxH");
  verifyCmd->add_flag("--inject-fault", injectFault)->group("");  // harness sensitivity hook

  auto* benchCmd = app.add_subcommand("bench", "Wall-clock comparison of evaluation strategies");
  std::string benchModel;
  std::string benchImage;
  std::string strategiesText = "all";
  std::string benchScales = "1.25,1.0,0.8,0.64,0.512";
  int runs = 5;
  benchCmd->add_option("--model", benchModel, "Model weight file")->required();
  benchCmd->add_option("--image", benchImage, "Input PGM image")->required();
  benchCmd->add_option("--strategies", strategiesText, "all or a comma-separated subset of patch,image,dcf");
  benchCmd->add_option("--scales", benchScales, "Comma-separated detection scales");
  benchCmd->add_option("--runs", runs, "Timed repetitions per strategy");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(trainCmd))
      return cmd_train(trainData, trainOut, trainConfig, ensembleCount, regressorOut, dumpDir);
    if (app.got_subcommand(detectCmd))
      return cmd_detect(modelPaths, imagePath, scalesText, tau, iouThr, regressorPath, heatmapPath);
    if (app.got_subcommand(flopsCmd))
      return cmd_flops(arch, archFile, sizeText, scaleCount, sparsityRatio);
    if (app.got_subcommand(verifyCmd)) return cmd_verify(verifySeed, sizesText, injectFault);
    if (app.got_subcommand(benchCmd))
      return cmd_bench(benchModel, benchImage, strategiesText, benchScales, runs);
  } catch (const dcf::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const dcf::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.kind) {
      case dcf::IoErrorKind::Geometry:
        return 4;
      case dcf::IoErrorKind::Corrupt:
        return 3;
      default:
        return 3;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
