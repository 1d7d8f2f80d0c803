#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <set>

#include "dcf/tensor.hpp"
#include "doctest.h"

using namespace dcf;

namespace {

Tensor ones(int h, int w, int c) { return Tensor(h, w, c, 1.0); }

Tensor random_tensor(std::mt19937& g, int h, int w, int c, double lo = -1.0, double hi = 1.0) {
  Tensor t(h, w, c);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.values) v = dist(g);
  return t;
}

KernelBank random_bank(std::mt19937& g, int count, int size, int inCh) {
  KernelBank b(count, size, inCh);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& w : b.weights) w = dist(g);
  for (double& v : b.biases) v = dist(g);
  return b;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.values.size() == b.values.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    worst = std::max(worst, std::fabs(a.values[i] - b.values[i]));
  return worst;
}

}  // namespace

TEST_CASE("conv2d_direct on all-ones input") {
  KernelBank bank(1, 2, 1);
  for (double& w : bank.weights) w = 1.0;

  Tensor out = conv2d_direct(ones(3, 3, 1), bank, Padding::Valid);
  CHECK(out.height == 2);
  CHECK(out.width == 2);
  CHECK(out.channels == 1);
  for (double v : out.values) CHECK(v == doctest::Approx(4.0));

  bank.biases[0] = -4.0;
  Tensor zeroed = conv2d_direct(ones(4, 4, 1), bank, Padding::Valid);
  CHECK(zeroed.height == 3);
  for (double v : zeroed.values) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("conv2d_direct 1x1 channel-selector kernel is the identity on channel 0") {
  std::mt19937 g(7);
  const Tensor input = random_tensor(g, 5, 6, 3);
  KernelBank bank(1, 1, 3);
  bank.weight(0, 0, 0, 0) = 1.0;
  const Tensor out = conv2d_direct(input, bank, Padding::Valid);
  CHECK(out.height == 5);
  CHECK(out.width == 6);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) CHECK(out.at(r, c, 0) == input.at(r, c, 0));
}

TEST_CASE("conv2d_direct rejects bad calls") {
  std::mt19937 g(3);
  const Tensor input = random_tensor(g, 6, 6, 2);
  CHECK_THROWS_AS(conv2d_direct(input, random_bank(g, 1, 3, 3), Padding::Valid),
                  std::invalid_argument);
  CHECK_THROWS_AS(conv2d_direct(input, random_bank(g, 1, 2, 2), Padding::Same),
                  std::invalid_argument);
  CHECK_THROWS_AS(conv2d_direct(random_tensor(g, 2, 2, 2), random_bank(g, 1, 3, 2), Padding::Valid),
                  std::invalid_argument);
}

TEST_CASE("conv2d_direct same padding keeps spatial dims") {
  std::mt19937 g(11);
  const Tensor input = random_tensor(g, 9, 7, 2);
  const Tensor out = conv2d_direct(input, random_bank(g, 4, 5, 2), Padding::Same);
  CHECK(out.height == 9);
  CHECK(out.width == 7);
  CHECK(out.channels == 4);
  CHECK(out.all_finite());
}

TEST_CASE("conv2d_fft agrees with conv2d_direct") {
  std::mt19937 g(42);
  SUBCASE("random 16x16x4 input, 5x5x4 bank") {
    const Tensor input = random_tensor(g, 16, 16, 4);
    const KernelBank bank = random_bank(g, 3, 5, 4);
    CHECK(max_abs_diff(conv2d_fft(input, bank, Padding::Valid),
                       conv2d_direct(input, bank, Padding::Valid)) < 1e-6);
    CHECK(max_abs_diff(conv2d_fft(input, bank, Padding::Same),
                       conv2d_direct(input, bank, Padding::Same)) < 1e-6);
  }
  SUBCASE("property: 100 random shapes and kernels") {
    for (int trial = 0; trial < 100; ++trial) {
      const int k = 1 + static_cast<int>(g() % 7);
      const int h = k + static_cast<int>(g() % 24);
      const int w = k + static_cast<int>(g() % 24);
      const int ch = 1 + static_cast<int>(g() % 4);
      const Tensor input = random_tensor(g, h, w, ch);
      const KernelBank bank = random_bank(g, 1 + static_cast<int>(g() % 3), k, ch);
      const Padding pad = (k % 2 == 1 && g() % 2) ? Padding::Same : Padding::Valid;
      const double diff =
          max_abs_diff(conv2d_fft(input, bank, pad), conv2d_direct(input, bank, pad));
      CHECK(diff < 1e-6);
    }
  }
}

TEST_CASE("conv2d_fft delta kernel is the identity") {
  std::mt19937 g(5);
  const Tensor input = random_tensor(g, 12, 10, 1);
  KernelBank bank(1, 3, 1);
  bank.weight(0, 1, 1, 0) = 1.0;
  const Tensor out = conv2d_fft(input, bank, Padding::Same);
  CHECK(max_abs_diff(out, input) < 1e-6);
}

TEST_CASE("conv2d_fft of all-zero input is the bias map") {
  KernelBank bank(2, 3, 2);
  bank.biases = {0.25, -1.5};
  const Tensor out = conv2d_fft(Tensor(10, 10, 2, 0.0), bank, Padding::Valid);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c) {
      CHECK(out.at(r, c, 0) == doctest::Approx(0.25));
      CHECK(out.at(r, c, 1) == doctest::Approx(-1.5));
    }
}

TEST_CASE("conv2d_fft skips all-zero tiles") {
  std::mt19937 g(17);
  const KernelBank bank = random_bank(g, 2, 5, 2);

  FftConvStats probe;
  conv2d_fft(random_tensor(g, 8, 8, 2), bank, Padding::Valid, &probe);
  const int tile = probe.tileSide;
  REQUIRE(tile > 0);

  const Tensor dense = random_tensor(g, 2 * tile, 4 * tile, 2);
  FftConvStats denseStats;
  conv2d_fft(dense, bank, Padding::Valid, &denseStats);

  // Blank out every other tile column: at least half the tiles are zero.
  Tensor input = dense;
  for (int r = 0; r < input.height; ++r)
    for (int c = 0; c < input.width; ++c)
      if ((c / tile) % 2 == 0)
        for (int ch = 0; ch < 2; ++ch) input.at(r, c, ch) = 0.0;

  FftConvStats stats;
  const Tensor viaFft = conv2d_fft(input, bank, Padding::Valid, &stats);
  CHECK(stats.tilesTotal == denseStats.tilesTotal);
  CHECK(stats.tilesSkipped >= stats.tilesTotal / 2);
  CHECK(stats.tilesTransformed < denseStats.tilesTransformed);
  CHECK(max_abs_diff(viaFft, conv2d_direct(input, bank, Padding::Valid)) < 1e-6);
}

TEST_CASE("conv2d_direct is linear up to the bias map") {
  std::mt19937 g(23);
  const Tensor x = random_tensor(g, 10, 9, 3);
  const Tensor y = random_tensor(g, 10, 9, 3);
  const KernelBank bank = random_bank(g, 2, 3, 3);
  const double alpha = 0.7, beta = -1.3;

  Tensor mixed(10, 9, 3);
  for (std::size_t i = 0; i < mixed.values.size(); ++i)
    mixed.values[i] = alpha * x.values[i] + beta * y.values[i];

  const Tensor lhs = conv2d_direct(mixed, bank, Padding::Valid);
  const Tensor cx = conv2d_direct(x, bank, Padding::Valid);
  const Tensor cy = conv2d_direct(y, bank, Padding::Valid);
  for (int r = 0; r < lhs.height; ++r)
    for (int c = 0; c < lhs.width; ++c)
      for (int ch = 0; ch < lhs.channels; ++ch) {
        const double rhs = alpha * cx.at(r, c, ch) + beta * cy.at(r, c, ch) -
                           (alpha + beta - 1.0) * bank.biases[ch];
        CHECK(lhs.at(r, c, ch) == doctest::Approx(rhs).epsilon(1e-9));
      }
}

TEST_CASE("relu") {
  Tensor t(1, 1, 2);
  t.values = {-1.0, 2.5};
  const Tensor out = relu(t);
  CHECK(out.values[0] == 0.0);
  CHECK(out.values[1] == 2.5);

  SUBCASE("symmetric values give sparsity near one half") {
    std::mt19937 g(31);
    const Tensor big = random_tensor(g, 50, 50, 4);
    CHECK(sparsity(relu(big)) == doctest::Approx(0.5).epsilon(0.05));
  }
  SUBCASE("idempotent") {
    std::mt19937 g(37);
    const Tensor big = random_tensor(g, 20, 20, 3);
    const Tensor once = relu(big);
    CHECK(max_abs_diff(relu(once), once) == 0.0);
  }
}

TEST_CASE("nn_resize") {
  SUBCASE("2x2 doubles into replicated 2x2 blocks") {
    Tensor t(2, 2, 1);
    t.values = {1, 2, 3, 4};
    const Tensor out = nn_resize(t, 4, 4);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) CHECK(out.at(r, c, 0) == t.at(r / 2, c / 2, 0));
  }
  SUBCASE("identity at equal dims") {
    std::mt19937 g(41);
    const Tensor t = random_tensor(g, 7, 5, 2);
    CHECK(max_abs_diff(nn_resize(t, 7, 5), t) == 0.0);
  }
  SUBCASE("downscale picks source values only") {
    Tensor t(4, 4, 1);
    for (int i = 0; i < 16; ++i) t.values[i] = i * 10.0;
    const Tensor out = nn_resize(t, 2, 2);
    std::set<double> sourceValues(t.values.begin(), t.values.end());
    for (double v : out.values) CHECK(sourceValues.count(v) == 1);
  }
  SUBCASE("integer upscale then downscale is the identity") {
    std::mt19937 g(43);
    for (int factor = 2; factor <= 4; ++factor) {
      const Tensor t = random_tensor(g, 6, 5, 2);
      const Tensor up = nn_resize(t, 6 * factor, 5 * factor);
      CHECK(max_abs_diff(nn_resize(up, 6, 5), t) == 0.0);
    }
  }
  SUBCASE("exact zeros survive") {
    Tensor t(3, 3, 1, 0.0);
    t.at(1, 1, 0) = 5.0;
    const Tensor out = nn_resize(t, 9, 9);
    for (double v : out.values) CHECK((v == 0.0 || v == 5.0));
  }
}

TEST_CASE("sparsity") {
  CHECK(sparsity(Tensor(4, 4, 1, 0.0)) == 1.0);
  CHECK(sparsity(Tensor(4, 4, 1, 3.0)) == 0.0);
  Tensor half(1, 4, 1);
  half.values = {0.0, 1.0, 0.0, 2.0};
  CHECK(sparsity(half) == 0.5);
}

TEST_CASE("crop") {
  std::mt19937 g(47);
  const Tensor t = random_tensor(g, 8, 8, 2);
  const Tensor c = crop(t, 2, 3, 4, 5);
  CHECK(c.height == 4);
  CHECK(c.width == 5);
  for (int r = 0; r < 4; ++r)
    for (int col = 0; col < 5; ++col)
      for (int ch = 0; ch < 2; ++ch) CHECK(c.at(r, col, ch) == t.at(r + 2, col + 3, ch));
  CHECK_THROWS_AS(crop(t, 6, 6, 4, 4), std::invalid_argument);
}
