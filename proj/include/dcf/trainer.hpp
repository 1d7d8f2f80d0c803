#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dcf/detector.hpp"
#include "dcf/layers.hpp"
#include "dcf/tensor.hpp"

namespace dcf {

struct TrainConfig {
  int batchSize = 64;
  int maxEpochs = 30;
  /// Training stops at the end of the first epoch whose held-out precision
  /// reaches this value.
  double targetPrecision = 0.995;
  std::uint32_t seed = 42;
};

struct Sample {
  Tensor image;  // model-window grayscale, values in [0,1]
  int label = 0;
};

struct SyntheticDataset {
  std::vector<Sample> samples;
};

/// Deterministic window dataset: even indices are textured negatives, odd
/// indices carry the structured pattern (jittered position, size, contrast).
SyntheticDataset generate_dataset(std::uint32_t seed, int count);

struct Scene {
  Tensor image;
  std::vector<Detection> truth;  // planted boxes; score 1, scale = 32/boxSide
};

/// Textured scene with one to maxPatterns planted patterns at window sizes
/// 32 or 64 pixels, non-overlapping, fully inside the image.
Scene generate_scene(std::uint32_t seed, int height, int width, int minPatterns, int maxPatterns);

struct LayerGrads {
  std::vector<double> weights;
  std::vector<double> biases;
};

struct Gradients {
  std::vector<LayerGrads> layers;  // aligned with net.layers, empty where no params
  double loss = 0.0;               // mean cross-entropy over the batch
};

/// Mean cross-entropy gradients over a batch, routed through ReLU masks,
/// pooling argmaxes (first tap row-major on ties) and the full normalization
/// derivative.
Gradients backward(const NetworkSpec& net, const std::vector<Sample>& batch,
                   Padding padding = Padding::Same);

double batch_loss(const NetworkSpec& net, const std::vector<Sample>& batch,
                  Padding padding = Padding::Same);

/// velocity <- mom * velocity - eps * (grad + wc * param); param += velocity.
void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
              std::vector<double>& velocity, double eps, double mom, double wc);

struct TrainResult {
  NetworkSpec net;
  double validationPrecision = 0.0;
  int epochsRun = 0;
  std::vector<double> precisionCurve;  // held-out precision after each epoch
};

/// SGD with per-layer momentum and weight decay taken from each layer's
/// hyper block. The first trainCount samples train, the rest validate.
/// Single-threaded and bit-deterministic for a fixed seed.
TrainResult train(const TrainConfig& cfg, const SyntheticDataset& dataset, int trainCount,
                  NetworkSpec net);

/// Fraction of samples whose argmax class matches the label.
double classification_precision(const NetworkSpec& net, const std::vector<Sample>& samples);

struct RegressorConfig {
  int epochs = 400;
  double learningRate = 0.1;  // initial rate; backtracking adapts it per step
  double momentum = 0.0;      // nonzero switches to plain momentum steps
  int hiddenUnits = 100;
  std::uint32_t seed = 7;
};

/// One refinement training case: a jittered proposal around a known box plus
/// the window features the regressor sees for that proposal.
struct ProposalCase {
  Detection proposal;
  Detection truth;
  Tensor features;
};

/// Normalized delta targets (dx, dy, dw, dh) that move the proposal onto the
/// truth box under the regressor's parameterization.
std::array<double, 4> box_delta_targets(const Detection& proposal, const Detection& truth);

std::vector<ProposalCase> make_proposal_cases(std::uint32_t seed, int count,
                                              const NetworkSpec& net);

struct RegressorTrainResult {
  RegressorWeights weights;
  std::vector<double> mseCurve;  // training MSE per epoch, element 0 is pre-training
};

/// Full-batch gradient descent on the mean squared delta error. With zero
/// momentum each step is line-searched, so the training curve decreases
/// monotonically whatever the feature scale.
RegressorTrainResult train_regressor(const RegressorConfig& cfg,
                                     const std::vector<ProposalCase>& cases);

}  // namespace dcf
