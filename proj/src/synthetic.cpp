#include <algorithm>
#include <cmath>

#include "dcf/trainer.hpp"
#include "rng.hpp"

namespace dcf {

namespace {

// Smooth value-noise texture: coarse random grid, bilinear blend, fine noise.
void fill_texture(Tensor& img, std::mt19937& g, double base, double amplitude) {
  const int step = 8;
  const int gh = img.height / step + 2;
  const int gw = img.width / step + 2;
  std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
  for (double& v : grid) v = base + detail::uniform(g, -amplitude, amplitude);
  for (int r = 0; r < img.height; ++r) {
    const double gr = static_cast<double>(r) / step;
    const int r0 = static_cast<int>(gr);
    const double fr = gr - r0;
    for (int c = 0; c < img.width; ++c) {
      const double gc = static_cast<double>(c) / step;
      const int c0 = static_cast<int>(gc);
      const double fc = gc - c0;
      const double v00 = grid[static_cast<std::size_t>(r0) * gw + c0];
      const double v01 = grid[static_cast<std::size_t>(r0) * gw + c0 + 1];
      const double v10 = grid[static_cast<std::size_t>(r0 + 1) * gw + c0];
      const double v11 = grid[static_cast<std::size_t>(r0 + 1) * gw + c0 + 1];
      img.at(r, c, 0) = (1 - fr) * ((1 - fc) * v00 + fc * v01) + fr * ((1 - fc) * v10 + fc * v11);
    }
  }
  for (double& v : img.values) v += detail::gauss(g) * 0.02;
}

void add_disc(Tensor& img, double cy, double cx, double ry, double rx, double delta) {
  const int r0 = std::max(0, static_cast<int>(std::floor(cy - ry - 1)));
  const int r1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + ry + 1)));
  const int c0 = std::max(0, static_cast<int>(std::floor(cx - rx - 1)));
  const int c1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + rx + 1)));
  const double edge = std::max(0.8, 0.25 * std::min(rx, ry));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double dy = (r - cy) / ry;
      const double dx = (c - cx) / rx;
      const double rim = std::min(rx, ry);
      const double d = std::sqrt(dy * dy + dx * dx) * rim;
      const double w = std::clamp((rim - d) / edge, 0.0, 1.0);
      img.at(r, c, 0) += delta * w;
    }
  }
}

// The structured target pattern: a lighter blob carrying two dark blobs and
// a dark bar, drawn relative to a window of side `box` centered at (cy, cx).
void draw_pattern(Tensor& img, double cy, double cx, double box, double contrast) {
  const double s = 0.8125 * box;  // pattern extent inside its window
  add_disc(img, cy, cx, 0.40 * s, 0.40 * s, 0.16 * contrast);
  add_disc(img, cy - 0.11 * s, cx - 0.15 * s, 0.085 * s, 0.085 * s, -0.40 * contrast);
  add_disc(img, cy - 0.11 * s, cx + 0.15 * s, 0.085 * s, 0.085 * s, -0.40 * contrast);
  add_disc(img, cy + 0.18 * s, cx, 0.06 * s, 0.16 * s, -0.34 * contrast);
}

void clamp01(Tensor& img) {
  for (double& v : img.values) v = std::clamp(v, 0.0, 1.0);
}

std::mt19937 sample_rng(std::uint32_t seed, std::uint32_t index) {
  return std::mt19937(seed * 1000003u + index * 2654435761u + 12345u);
}

}  // namespace

SyntheticDataset generate_dataset(std::uint32_t seed, int count) {
  SyntheticDataset ds;
  ds.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::mt19937 g = sample_rng(seed, static_cast<std::uint32_t>(i));
    Sample s;
    s.label = i % 2;
    s.image = Tensor(32, 32, 1);
    fill_texture(s.image, g, detail::uniform(g, 0.42, 0.58), 0.08);
    if (s.label == 1) {
      const double cy = 16.0 + detail::uniform_int(g, 5) - 2;
      const double cx = 16.0 + detail::uniform_int(g, 5) - 2;
      const double box = 26.0 + detail::uniform_int(g, 5) - 2;
      draw_pattern(s.image, cy, cx, box, detail::uniform(g, 0.8, 1.2));
    } else if (detail::uniform01(g) < 0.3) {
      // Occasional non-pattern distractor blobs keep negatives honest.
      const int blobs = 1 + detail::uniform_int(g, 2);
      for (int b = 0; b < blobs; ++b) {
        const double r = detail::uniform(g, 2.0, 5.0);
        add_disc(s.image, detail::uniform(g, 6.0, 26.0), detail::uniform(g, 6.0, 26.0), r, r,
                 (detail::uniform01(g) < 0.5 ? -1 : 1) * detail::uniform(g, 0.15, 0.3));
      }
    }
    clamp01(s.image);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Scene generate_scene(std::uint32_t seed, int height, int width, int minPatterns, int maxPatterns) {
  std::mt19937 g = sample_rng(seed, 0x5ce9eu);
  Scene scene;
  scene.image = Tensor(height, width, 1);
  fill_texture(scene.image, g, 0.5, 0.07);

  const int wanted = minPatterns + detail::uniform_int(g, maxPatterns - minPatterns + 1);
  for (int p = 0; p < wanted; ++p) {
    const int box = detail::uniform01(g) < 0.5 ? 32 : 64;
    bool placed = false;
    for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
      const double margin = box / 2.0 + 6.0;
      const double cy = detail::uniform(g, margin, height - margin);
      const double cx = detail::uniform(g, margin, width - margin);
      bool clear = true;
      for (const Detection& t : scene.truth) {
        const double ty = t.y + t.h / 2.0;
        const double tx = t.x + t.w / 2.0;
        // Chebyshev separation guarantees the axis-aligned boxes stay apart.
        const double minDist = (box + std::max(t.w, t.h)) / 2.0 + 12.0;
        if (std::max(std::fabs(ty - cy), std::fabs(tx - cx)) < minDist) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      draw_pattern(scene.image, cy, cx, box, detail::uniform(g, 0.9, 1.25));
      Detection t;
      t.x = cx - box / 2.0;
      t.y = cy - box / 2.0;
      t.w = box;
      t.h = box;
      t.score = 1.0;
      t.scale = 32.0 / box;
      scene.truth.push_back(t);
      placed = true;
    }
  }
  clamp01(scene.image);
  return scene;
}

std::array<double, 4> box_delta_targets(const Detection& proposal, const Detection& truth) {
  return {(truth.x - proposal.x) / proposal.w, (truth.y - proposal.y) / proposal.h,
          (truth.w - proposal.w) / proposal.w, (truth.h - proposal.h) / proposal.h};
}

std::vector<ProposalCase> make_proposal_cases(std::uint32_t seed, int count,
                                              const NetworkSpec& net) {
  std::vector<ProposalCase> cases;
  cases.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::mt19937 g = sample_rng(seed, 0x9000u + static_cast<std::uint32_t>(i));
    Tensor canvas(96, 96, 1);
    fill_texture(canvas, g, 0.5, 0.07);
    const double box = detail::uniform(g, 28.0, 44.0);
    const double cy = 48.0 + detail::uniform(g, -8.0, 8.0);
    const double cx = 48.0 + detail::uniform(g, -8.0, 8.0);
    draw_pattern(canvas, cy, cx, box, detail::uniform(g, 0.9, 1.2));
    clamp01(canvas);

    ProposalCase pc;
    pc.truth.x = cx - box / 2.0;
    pc.truth.y = cy - box / 2.0;
    pc.truth.w = box;
    pc.truth.h = box;
    pc.proposal.x = pc.truth.x + detail::uniform(g, -0.2, 0.2) * box;
    pc.proposal.y = pc.truth.y + detail::uniform(g, -0.2, 0.2) * box;
    pc.proposal.w = box * detail::uniform(g, 0.82, 1.22);
    pc.proposal.h = box * detail::uniform(g, 0.82, 1.22);
    pc.features = window_features(canvas, net, pc.proposal);
    cases.push_back(std::move(pc));
  }
  return cases;
}

}  // namespace dcf
