// Integration checks that need trained models: planted-pattern detection,
// ensemble gating, scale consistency and regressor refinement.

#include <cmath>
#include <cstdio>
#include <vector>

#include "dcf/detector.hpp"
#include "dcf/fragments.hpp"
#include "dcf/trainer.hpp"

using namespace dcf;

namespace {

int failures = 0;

void expect(bool ok, const char* what) {
  std::printf("%s %s\n", ok ? "[ok]  " : "[FAIL]", what);
  if (!ok) ++failures;
}

const Detection* best_match(const std::vector<Detection>& dets, const Detection& truth) {
  const Detection* best = nullptr;
  double bestIou = 0.5;
  for (const Detection& d : dets) {
    const double overlap = iou(d, truth);
    if (overlap >= bestIou) {
      bestIou = overlap;
      best = &d;
    }
  }
  return best;
}

}  // namespace

int main() {
  TrainConfig cfg;
  cfg.maxEpochs = 6;
  cfg.targetPrecision = 2.0;
  const SyntheticDataset ds = generate_dataset(42, 3600);

  cfg.seed = 42;
  const TrainResult m1 = train(cfg, ds, 3000, reference_net(42, Padding::Same));
  cfg.seed = 43;
  const TrainResult m2 = train(cfg, ds, 3000, reference_net(43, Padding::Same));
  std::printf("models: %.4f / %.4f validation precision\n", m1.validationPrecision,
              m2.validationPrecision);
  expect(m1.validationPrecision >= 0.9, "first model learns the window task");

  const std::vector<NetworkSpec> single{m1.net};
  const std::vector<NetworkSpec> ensemble{m1.net, m2.net};
  DetectorConfig config;
  config.tau = 0.4;

  {
    // One planted pattern: exactly one detection overlapping it.
    const Scene scene = generate_scene(611, 192, 192, 1, 1);
    const std::vector<Detection> dets = detect(scene.image, ensemble, nullptr, config);
    expect(dets.size() >= 1, "single planted pattern is detected");
    expect(best_match(dets, scene.truth.front()) != nullptr,
           "detection overlaps the planted box at IoU 0.5");
  }

  {
    // Patterns at both window sizes: detections at the matching scales.
    Scene scene;
    for (std::uint32_t seed = 620;; ++seed) {
      scene = generate_scene(seed, 256, 256, 2, 2);
      if (scene.truth.size() == 2 && scene.truth[0].w != scene.truth[1].w) break;
    }
    const std::vector<Detection> dets = detect(scene.image, ensemble, nullptr, config);
    bool okBoth = true;
    for (const Detection& truth : scene.truth) {
      const Detection* match = best_match(dets, truth);
      if (!match) {
        okBoth = false;
        continue;
      }
      // A 64-pixel box must come from a half-resolution response.
      if (truth.w == 64 && match->scale > 0.7) okBoth = false;
      if (truth.w == 32 && match->scale < 0.7) okBoth = false;
    }
    expect(okBoth, "two sizes are matched at the corresponding scales");
  }

  {
    // Ensemble gating never admits more than the generating model alone.
    const Scene scene = generate_scene(633, 256, 256, 2, 3);
    const std::vector<Detection> one = detect(scene.image, single, nullptr, config);
    const std::vector<Detection> two = detect(scene.image, ensemble, nullptr, config);
    expect(two.size() <= one.size(), "conjunction can only remove candidates");
  }

  {
    // Scale consistency: doubling the image and halving the scales doubles
    // the matched boxes.
    const Scene scene = generate_scene(640, 128, 128, 1, 1);
    DetectorConfig base = config;
    base.scales = {1.0, 0.8};
    const std::vector<Detection> dets = detect(scene.image, ensemble, nullptr, base);

    const Tensor doubled = nn_resize(scene.image, 256, 256);
    DetectorConfig halved = config;
    halved.scales = {0.5, 0.4};
    const std::vector<Detection> dets2 = detect(doubled, ensemble, nullptr, halved);

    const Detection* match = best_match(dets, scene.truth.front());
    bool ok = match != nullptr;
    if (ok) {
      const Detection scaledUp{2 * match->x, 2 * match->y, 2 * match->w, 2 * match->h, 0, 1};
      ok = best_match(dets2, scaledUp) != nullptr;
    }
    expect(ok, "upscaled image with halved scales doubles the detection box");
  }

  {
    // Regressor: trained refinement improves jittered proposals out of sample
    // and detect accepts it in the pipeline.
    const std::vector<ProposalCase> trainCases = make_proposal_cases(700, 300, m1.net);
    const std::vector<ProposalCase> heldOut = make_proposal_cases(900, 100, m1.net);
    const RegressorTrainResult reg = train_regressor(RegressorConfig{}, trainCases);
    expect(reg.mseCurve.back() < reg.mseCurve.front(), "regressor training reduces the MSE");

    double before = 0.0, after = 0.0;
    for (const ProposalCase& pc : heldOut) {
      before += iou(pc.proposal, pc.truth);
      after += iou(regress_box(pc.features, reg.weights, pc.proposal, 96, 96), pc.truth);
    }
    std::printf("held-out proposal IoU %.4f -> %.4f\n", before / heldOut.size(),
                after / heldOut.size());
    expect(after > before, "refined proposals overlap the truth more than raw ones");

    const Scene scene = generate_scene(611, 192, 192, 1, 1);
    const std::vector<Detection> dets = detect(scene.image, ensemble, &reg.weights, config);
    expect(best_match(dets, scene.truth.front()) != nullptr,
           "pipeline with the regressor still finds the planted pattern");
  }

  std::printf(failures == 0 ? "integration: all checks passed\n"
                            : "integration: %d checks failed\n",
              failures);
  return failures == 0 ? 0 : 1;
}
