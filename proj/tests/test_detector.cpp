#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "dcf/detector.hpp"
#include "doctest.h"

using namespace dcf;

namespace {

Tensor random_tensor(std::mt19937& g, int h, int w, int c, double lo = -1.0, double hi = 1.0) {
  Tensor t(h, w, c);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.values) v = dist(g);
  return t;
}

Fragment make_fragment(Tensor map) {
  Fragment f;
  f.path = {{0, 0}, {0, 0}};
  f.geometry = fragment_geometry(f.path, {2, 2}, 32);
  f.map = std::move(map);
  return f;
}

}  // namespace

TEST_CASE("score_fragment") {
  std::mt19937 g(3);
  SUBCASE("zero weights give a constant bias map") {
    FcWeights fc(2, 4, 4, 3);
    fc.biases = {0.75, -0.25};
    const Fragment f = make_fragment(random_tensor(g, 9, 7, 3));
    const ResponseMap map = score_fragment(f, fc_as_conv(fc), 0);
    CHECK(map.scores.height == 6);
    CHECK(map.scores.width == 4);
    for (double v : map.scores.values) CHECK(v == doctest::Approx(0.75));
  }
  SUBCASE("window-sized fragment gives a 1x1 map equal to fc_forward") {
    FcWeights fc(2, 5, 5, 2);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (double& w : fc.weights) w = dist(g);
    const Fragment f = make_fragment(random_tensor(g, 5, 5, 2));
    const ResponseMap map = score_fragment(f, fc_as_conv(fc), 1);
    REQUIRE(map.scores.height == 1);
    REQUIRE(map.scores.width == 1);
    CHECK(map.scores.at(0, 0, 0) == doctest::Approx(fc_forward(f.map, fc)[1]).epsilon(1e-12));
  }
  SUBCASE("all positions match a window-loop oracle") {
    FcWeights fc(2, 4, 4, 2);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (double& w : fc.weights) w = dist(g);
    for (double& b : fc.biases) b = dist(g);
    const Fragment f = make_fragment(random_tensor(g, 10, 8, 2));
    const ResponseMap map = score_fragment(f, fc_as_conv(fc), 0);
    for (int m = 0; m < map.scores.height; ++m)
      for (int n = 0; n < map.scores.width; ++n) {
        const double oracle = fc_forward(crop(f.map, m, n, 4, 4), fc)[0];
        CHECK(std::fabs(map.scores.at(m, n, 0) - oracle) < 1e-9);
      }
  }
  SUBCASE("fragment smaller than the window yields an empty map") {
    const Fragment f = make_fragment(random_tensor(g, 3, 3, 2));
    const ResponseMap map = score_fragment(f, fc_as_conv(FcWeights(2, 5, 5, 2)), 0);
    CHECK(map.scores.count() == 0);
  }
}

TEST_CASE("multiscale_responses") {
  std::mt19937 g(5);
  FcWeights fc(2, 4, 4, 2);
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (double& w : fc.weights) w = dist(g);
  const KernelBank bank = fc_as_conv(fc);

  FragmentSet dcfs;
  dcfs.sourceHeight = dcfs.sourceWidth = 32;
  dcfs.poolSizes = {2, 2};
  dcfs.windowSide = 32;
  dcfs.fragments.push_back(make_fragment(random_tensor(g, 16, 16, 2)));
  dcfs.fragments.push_back(make_fragment(random_tensor(g, 12, 12, 2)));

  SUBCASE("unit scale equals score_fragment") {
    const MultiscaleResult res = multiscale_responses(dcfs, {1.0}, bank, 0);
    REQUIRE(res.maps.size() == 2);
    CHECK(res.skipped == 0);
    for (std::size_t i = 0; i < 2; ++i) {
      const ResponseMap direct = score_fragment(dcfs.fragments[i], bank, 0);
      REQUIRE(res.maps[i].scores.count() == direct.scores.count());
      for (std::size_t t = 0; t < direct.scores.count(); ++t)
        CHECK(res.maps[i].scores.values[t] == direct.scores.values[t]);
    }
  }
  SUBCASE("half scale shrinks the response by shape arithmetic") {
    const MultiscaleResult res = multiscale_responses(dcfs, {0.5}, bank, 0);
    REQUIRE(res.maps.size() == 2);
    CHECK(res.maps[0].scores.height == 8 - 4 + 1);
    CHECK(res.maps[0].scale == 0.5);
  }
  SUBCASE("scales too small are skipped with a flag") {
    const MultiscaleResult res = multiscale_responses(dcfs, {0.2}, bank, 0);
    CHECK(res.maps.size() == 0);
    CHECK(res.skipped == 2);
  }
  SUBCASE("zero fragments with zero-bias bank give zero responses at every scale") {
    FragmentSet zeros;
    zeros.poolSizes = {2, 2};
    zeros.windowSide = 32;
    zeros.fragments.push_back(make_fragment(Tensor(16, 16, 2, 0.0)));
    const MultiscaleResult res = multiscale_responses(zeros, {1.0, 0.5}, bank, 0);
    for (const ResponseMap& m : res.maps)
      for (double v : m.scores.values) CHECK(v == 0.0);
  }
  SUBCASE("empty scale list rejected") {
    CHECK_THROWS_AS(multiscale_responses(dcfs, {}, bank, 0), std::invalid_argument);
  }
}

TEST_CASE("peaks") {
  ResponseMap map;
  map.geometry = fragment_geometry({{0, 0}, {0, 0}}, {2, 2}, 32);

  SUBCASE("all below threshold") {
    map.scores = Tensor(4, 4, 1, 0.1);
    CHECK(peaks(map, 0.5).empty());
  }
  SUBCASE("single super-threshold cell") {
    map.scores = Tensor(5, 5, 1, 0.0);
    map.scores.at(2, 3, 0) = 0.9;
    const auto p = peaks(map, 0.5);
    REQUIRE(p.size() == 1);
    CHECK(p[0].row == 2);
    CHECK(p[0].col == 3);
    CHECK(p[0].score == 0.9);
  }
  SUBCASE("two blobs separated by sub-threshold cells") {
    map.scores = Tensor(6, 6, 1, 0.0);
    map.scores.at(1, 1, 0) = 0.8;
    map.scores.at(1, 2, 0) = 0.9;
    map.scores.at(4, 4, 0) = 0.7;
    const auto p = peaks(map, 0.5);
    REQUIRE(p.size() == 2);
    CHECK(p[0].score == 0.9);
    CHECK(p[0].row == 1);
    CHECK(p[1].score == 0.7);
    CHECK(p[1].row == 4);
    CHECK(p[1].col == 4);
  }
  SUBCASE("eight-connectivity merges diagonal neighbors") {
    map.scores = Tensor(4, 4, 1, 0.0);
    map.scores.at(0, 0, 0) = 0.6;
    map.scores.at(1, 1, 0) = 0.8;
    CHECK(peaks(map, 0.5).size() == 1);
  }
}

TEST_CASE("backproject") {
  SUBCASE("origin") {
    const FragmentGeometry geo = fragment_geometry({{0, 0}, {0, 0}}, {2, 2}, 32);
    const Detection d = backproject({0, 0}, geo, 1.0);
    CHECK(d.x == 0.0);
    CHECK(d.y == 0.0);
    CHECK(d.w == 32.0);
    CHECK(d.h == 32.0);
  }
  SUBCASE("offset and stride compose") {
    FragmentGeometry geo;
    geo.cumulativeStride = 4;
    geo.cumulativeOffset = {3, 2};
    geo.windowSide = 32;
    const Detection d = backproject({2, 3}, geo, 1.0);
    CHECK(d.x == 14.0);
    CHECK(d.y == 11.0);
    CHECK(d.w == 32.0);
  }
  SUBCASE("half scale doubles the window") {
    const FragmentGeometry geo = fragment_geometry({{0, 0}, {0, 0}}, {2, 2}, 32);
    const Detection d = backproject({0, 0}, geo, 0.5);
    CHECK(d.w == 64.0);
    CHECK(d.h == 64.0);
  }
  SUBCASE("clipping to image bounds") {
    const FragmentGeometry geo = fragment_geometry({{0, 0}, {0, 0}}, {2, 2}, 32);
    const Detection d = backproject({20, 20}, geo, 1.0, 90, 90);
    CHECK(d.x + d.w <= 90.0);
    CHECK(d.y + d.h <= 90.0);
  }
}

TEST_CASE("nms") {
  SUBCASE("single detection survives") {
    const std::vector<Detection> kept = nms({{1, 1, 5, 5, 0.9, 1.0}}, 0.3);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);
  }
  SUBCASE("identical boxes keep the higher score") {
    const std::vector<Detection> kept =
        nms({{0, 0, 4, 4, 0.8, 1.0}, {0, 0, 4, 4, 0.9, 1.0}}, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);
  }
  SUBCASE("threshold straddles the hand-computed IoU of one third") {
    const Detection a{0, 0, 2, 2, 0.9, 1.0};
    const Detection b{1, 0, 2, 2, 0.8, 1.0};
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
    CHECK(nms({a, b}, 0.3).size() == 1);
    CHECK(nms({a, b}, 0.4).size() == 2);
  }
  SUBCASE("equal scores break ties by position, deterministically") {
    const std::vector<Detection> kept =
        nms({{9, 0, 2, 2, 0.5, 1.0}, {0, 0, 2, 2, 0.5, 1.0}, {5, 0, 2, 2, 0.5, 1.0}}, 0.3);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].x == 0);
    CHECK(kept[1].x == 5);
    CHECK(kept[2].x == 9);
  }
  SUBCASE("output is a subset ordered by score") {
    std::mt19937 g(17);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<Detection> dets;
    for (int i = 0; i < 40; ++i)
      dets.push_back({dist(g) * 50, dist(g) * 50, 8 + dist(g) * 8, 8 + dist(g) * 8, dist(g), 1.0});
    const std::vector<Detection> kept = nms(dets, 0.3);
    CHECK(kept.size() <= dets.size());
    for (std::size_t i = 1; i < kept.size(); ++i) CHECK(kept[i - 1].score >= kept[i].score);
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j) CHECK(iou(kept[i], kept[j]) <= 0.3);
  }
}

TEST_CASE("ensemble_size") {
  CHECK(ensemble_size(0.0026, 0.0008) == 2);
  CHECK(ensemble_size(0.5, 0.5) == 1);
  CHECK(ensemble_size(0.1, 0.001) == 3);  // exact integer ratio
  CHECK_THROWS_AS(ensemble_size(1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(ensemble_size(0.5, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(ensemble_size(0.5, 0.0), std::invalid_argument);

  SUBCASE("monotone: lowering the target never shrinks the ensemble") {
    std::mt19937 g(23);
    std::uniform_real_distribution<double> dist(1e-4, 0.9);
    for (int trial = 0; trial < 200; ++trial) {
      const double R = dist(g);
      double h1 = dist(g) * R;
      double h2 = dist(g) * R;
      if (h1 > h2) std::swap(h1, h2);
      CHECK(ensemble_size(R, h1) >= ensemble_size(R, h2));
    }
  }
}

TEST_CASE("ensemble_combine") {
  SUBCASE("single model is the identity") {
    const EnsembleDecision dec = ensemble_combine({{0.9, 0.2, 0.6}}, 0.5);
    CHECK(dec.keep == std::vector<char>{1, 0, 1});
    CHECK(dec.score[0] == 0.9);
  }
  SUBCASE("conjunction with min score") {
    const EnsembleDecision dec = ensemble_combine({{0.9, 0.9}, {0.7, 0.3}}, 0.5);
    CHECK(dec.keep[0] == 1);
    CHECK(dec.score[0] == 0.7);
    CHECK(dec.keep[1] == 0);
  }
  SUBCASE("mismatched candidate sets rejected") {
    CHECK_THROWS_AS(ensemble_combine({{0.9}, {0.7, 0.2}}, 0.5), std::invalid_argument);
  }
}

TEST_CASE("regress_box") {
  std::mt19937 g(29);
  RegressorWeights reg;
  reg.hidden = FcWeights(4, 2, 2, 1);
  reg.output = FcWeights(4, 1, 1, 4);
  const Tensor features = random_tensor(g, 2, 2, 1, 0.0, 1.0);
  const Detection proposal{10, 20, 40, 40, 0.9, 1.0};

  SUBCASE("all-zero regressor returns the proposal unchanged") {
    const Detection d = regress_box(features, reg, proposal, 256, 256);
    CHECK(d.x == proposal.x);
    CHECK(d.y == proposal.y);
    CHECK(d.w == proposal.w);
    CHECK(d.h == proposal.h);
  }
  SUBCASE("bias-only deltas shift every proposal") {
    reg.output.biases = {0.1, -0.05, 0.0, 0.0};
    const Detection d = regress_box(features, reg, proposal, 256, 256);
    CHECK(d.x == doctest::Approx(10 + 0.1 * 40));
    CHECK(d.y == doctest::Approx(20 - 0.05 * 40));
    CHECK(d.w == doctest::Approx(40));
  }
  SUBCASE("refined box stays inside the image") {
    reg.output.biases = {5.0, 5.0, 5.0, 5.0};
    const Detection d = regress_box(features, reg, proposal, 100, 100);
    CHECK(d.x + d.w <= 100.0);
    CHECK(d.y + d.h <= 100.0);
  }
}

TEST_CASE("detect on a blank image with a negative-margin model is empty") {
  NetworkSpec net = reference_net(31, Padding::Same);
  // A strongly negative face bias keeps every window below threshold.
  net.layers[net.fc_layer_index()].fc.biases = {2.0, -2.0};
  const std::vector<Detection> dets =
      detect(Tensor(64, 64, 1, 0.0), {net}, nullptr, DetectorConfig{});
  CHECK(dets.empty());
}
