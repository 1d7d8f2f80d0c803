#include "dcf/detector.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace dcf {

double iou(const Detection& a, const Detection& b) {
  const double x1 = std::max(a.x, b.x);
  const double y1 = std::max(a.y, b.y);
  const double x2 = std::min(a.x + a.w, b.x + b.w);
  const double y2 = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

Tensor conv_by(const Tensor& x, const KernelBank& bank, ConvBackend backend) {
  return backend == ConvBackend::Fft ? conv2d_fft(x, bank, Padding::Valid)
                                     : conv2d_direct(x, bank, Padding::Valid);
}

void clip_box(Detection& d, int imageHeight, int imageWidth) {
  if (imageHeight <= 0 || imageWidth <= 0) return;
  d.x = std::clamp(d.x, 0.0, imageWidth - 1.0);
  d.y = std::clamp(d.y, 0.0, imageHeight - 1.0);
  d.w = std::max(1.0, std::min(d.w, imageWidth - d.x));
  d.h = std::max(1.0, std::min(d.h, imageHeight - d.y));
}

bool det_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.x != b.x) return a.x < b.x;
  if (a.y != b.y) return a.y < b.y;
  return a.scale < b.scale;
}

}  // namespace

ResponseMap score_fragment(const Fragment& fragment, const KernelBank& fcBank, int classIndex,
                           double scale, ConvBackend backend) {
  if (classIndex < 0 || classIndex >= fcBank.count)
    throw std::invalid_argument("class index out of range");
  ResponseMap map;
  map.scale = scale;
  map.offsetPath = fragment.path;
  map.geometry = fragment.geometry;
  if (fragment.map.height < fcBank.size || fragment.map.width < fcBank.size) {
    map.scores = Tensor();  // too small for one window: empty response
    return map;
  }
  const Tensor all = conv_by(fragment.map, fcBank, backend);
  map.scores = Tensor(all.height, all.width, 1);
  for (int m = 0; m < all.height; ++m)
    for (int n = 0; n < all.width; ++n) map.scores.at(m, n, 0) = all.at(m, n, classIndex);
  return map;
}

MultiscaleResult multiscale_responses(const FragmentSet& dcfs, const std::vector<double>& scales,
                                      const KernelBank& fcBank, int classIndex,
                                      ConvBackend backend) {
  if (scales.empty()) throw std::invalid_argument("scale list must be non-empty");
  MultiscaleResult result;
  for (double scale : scales) {
    if (scale <= 0.0) throw std::invalid_argument("scales must be positive");
    for (const Fragment& f : dcfs.fragments) {
      const int th = static_cast<int>(std::lround(f.map.height * scale));
      const int tw = static_cast<int>(std::lround(f.map.width * scale));
      if (th < fcBank.size || tw < fcBank.size) {
        ++result.skipped;
        continue;
      }
      Fragment resized;
      resized.path = f.path;
      resized.geometry = f.geometry;
      resized.map = (th == f.map.height && tw == f.map.width) ? f.map : nn_resize(f.map, th, tw);
      result.maps.push_back(score_fragment(resized, fcBank, classIndex, scale, backend));
    }
  }
  return result;
}

std::vector<Peak> peaks(const ResponseMap& map, double tau) {
  const Tensor& s = map.scores;
  std::vector<Peak> out;
  if (s.height == 0 || s.width == 0) return out;
  std::vector<char> seen(static_cast<std::size_t>(s.height) * s.width, 0);
  std::vector<int> stack;
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      const int idx = r * s.width + c;
      if (seen[idx] || s.at(r, c, 0) < tau) continue;
      // Flood-fill one 8-connected component.
      double best = s.at(r, c, 0);
      double sumR = 0.0, sumC = 0.0;
      int cells = 0;
      stack.assign(1, idx);
      seen[idx] = 1;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cr = cur / s.width;
        const int cc = cur % s.width;
        best = std::max(best, s.at(cr, cc, 0));
        sumR += cr;
        sumC += cc;
        ++cells;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int nr = cr + dr;
            const int nc = cc + dc;
            if (nr < 0 || nc < 0 || nr >= s.height || nc >= s.width) continue;
            const int nidx = nr * s.width + nc;
            if (!seen[nidx] && s.at(nr, nc, 0) >= tau) {
              seen[nidx] = 1;
              stack.push_back(nidx);
            }
          }
        }
      }
      Peak p;
      p.row = static_cast<int>(std::lround(sumR / cells));
      p.col = static_cast<int>(std::lround(sumC / cells));
      p.score = best;
      out.push_back(p);
    }
  }
  return out;
}

Detection backproject(std::pair<int, int> position, const FragmentGeometry& geometry, double scale,
                      int imageHeight, int imageWidth) {
  if (scale <= 0.0) throw std::invalid_argument("scale must be positive");
  Detection d;
  d.x = geometry.cumulativeStride * position.second / scale + geometry.cumulativeOffset.second;
  d.y = geometry.cumulativeStride * position.first / scale + geometry.cumulativeOffset.first;
  d.w = geometry.windowSide / scale;
  d.h = geometry.windowSide / scale;
  d.scale = scale;
  clip_box(d, imageHeight, imageWidth);
  return d;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iouThreshold) {
  std::sort(dets.begin(), dets.end(), det_before);
  std::vector<Detection> kept;
  std::vector<char> dead(dets.size(), 0);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dead[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t j = i + 1; j < dets.size(); ++j)
      if (!dead[j] && iou(dets[i], dets[j]) > iouThreshold) dead[j] = 1;
  }
  return kept;
}

int ensemble_size(double R, double H) {
  if (!(R > 0.0 && R < 1.0)) throw std::invalid_argument("R must lie in (0,1)");
  if (!(H > 0.0 && H < 1.0)) throw std::invalid_argument("H must lie in (0,1)");
  if (H > R) throw std::invalid_argument("H must not exceed R");
  const double ratio = std::log(H) / std::log(R);
  // Guard the exact-integer case against representation noise.
  return static_cast<int>(std::ceil(ratio - 1e-9));
}

EnsembleDecision ensemble_combine(const std::vector<std::vector<double>>& perModelScores,
                                  double tau) {
  if (perModelScores.empty()) throw std::invalid_argument("no model scores given");
  const std::size_t n = perModelScores.front().size();
  for (const auto& s : perModelScores)
    if (s.size() != n) throw std::invalid_argument("candidate sets differ across models");
  EnsembleDecision dec;
  dec.keep.assign(n, 1);
  dec.score.assign(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    double mn = perModelScores[0][c];
    bool ok = true;
    for (const auto& s : perModelScores) {
      mn = std::min(mn, s[c]);
      if (!(s[c] > tau)) ok = false;
    }
    dec.keep[c] = ok ? 1 : 0;
    dec.score[c] = mn;
  }
  return dec;
}

Detection regress_box(const Tensor& windowFeatures, const RegressorWeights& reg,
                      const Detection& proposal, int imageHeight, int imageWidth) {
  const std::vector<double> hidden = fc_forward(windowFeatures, reg.hidden);
  Tensor h(1, 1, static_cast<int>(hidden.size()));
  for (std::size_t i = 0; i < hidden.size(); ++i) h.values[i] = std::max(0.0, hidden[i]);
  const std::vector<double> delta = fc_forward(h, reg.output);
  if (delta.size() != 4) throw std::invalid_argument("regressor output must have 4 values");
  Detection d = proposal;
  d.x = proposal.x + delta[0] * proposal.w;
  d.y = proposal.y + delta[1] * proposal.h;
  d.w = proposal.w + delta[2] * proposal.w;
  d.h = proposal.h + delta[3] * proposal.h;
  d.w = std::max(1.0, d.w);
  d.h = std::max(1.0, d.h);
  clip_box(d, imageHeight, imageWidth);
  return d;
}

Tensor window_features(const Tensor& image, const NetworkSpec& net, const Detection& box) {
  int r0 = static_cast<int>(std::lround(box.y));
  int c0 = static_cast<int>(std::lround(box.x));
  int h = std::max(1, static_cast<int>(std::lround(box.h)));
  int w = std::max(1, static_cast<int>(std::lround(box.w)));
  r0 = std::max(0, std::min(r0, image.height - 1));
  c0 = std::max(0, std::min(c0, image.width - 1));
  h = std::min(h, image.height - r0);
  w = std::min(w, image.width - c0);
  Tensor window = crop(image, r0, c0, h, w);
  if (h != net.inputSide || w != net.inputSide)
    window = nn_resize(window, net.inputSide, net.inputSide);
  for (const LayerSpec& layer : net.layers) {
    if (layer.kind == LayerKind::Fc || layer.kind == LayerKind::Softmax) break;
    switch (layer.kind) {
      case LayerKind::Conv:
        window = conv_layer_forward(window, layer.bank, Padding::Same);
        break;
      case LayerKind::Pool:
        window = maxpool_fragment(window, layer.poolSize, {0, 0});
        break;
      case LayerKind::Lcn:
        window = lcn_forward(window, layer.lcn);
        break;
      default:
        break;
    }
  }
  return window;
}

std::vector<Detection> detect(const Tensor& image, const std::vector<NetworkSpec>& models,
                              const RegressorWeights* regressor, const DetectorConfig& config) {
  if (models.empty()) throw std::invalid_argument("detect needs at least one model");
  for (const NetworkSpec& net : models) {
    net.validate(Padding::Same);
    if (net.inputSide != models.front().inputSide)
      throw std::invalid_argument("ensemble models disagree on window size");
  }

  // Per model: face-class probability maps for every (scale, fragment) pair.
  // Probabilities come from softmax over the two class response channels.
  std::vector<std::vector<ResponseMap>> probMaps(models.size());
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const NetworkSpec& net = models[mi];
    const int fcIdx = net.fc_layer_index();
    if (fcIdx < 0) throw std::invalid_argument("model has no FC layer");
    const KernelBank fcBank = fc_as_conv(net.layers[fcIdx].fc);
    std::optional<FftConvPlan> plan;
    if (config.scoringBackend == ConvBackend::Fft) plan.emplace(fcBank, Padding::Valid);
    const FragmentSet dcfs = extract_dcfs(image, net, Padding::Same);
    for (double scale : config.scales) {
      for (const Fragment& f : dcfs.fragments) {
        const int th = static_cast<int>(std::lround(f.map.height * scale));
        const int tw = static_cast<int>(std::lround(f.map.width * scale));
        if (th < fcBank.size || tw < fcBank.size) continue;
        const Tensor resized =
            (th == f.map.height && tw == f.map.width) ? f.map : nn_resize(f.map, th, tw);
        const Tensor all =
            plan ? plan->run(resized) : conv2d_direct(resized, fcBank, Padding::Valid);
        ResponseMap map;
        map.scale = scale;
        map.offsetPath = f.path;
        map.geometry = f.geometry;
        map.scores = Tensor(all.height, all.width, 1);
        for (int m = 0; m < all.height; ++m) {
          for (int n = 0; n < all.width; ++n) {
            std::vector<double> sc(all.channels);
            for (int c = 0; c < all.channels; ++c) sc[c] = all.at(m, n, c);
            map.scores.at(m, n, 0) = softmax(sc)[kFaceClass];
          }
        }
        probMaps[mi].push_back(std::move(map));
      }
    }
  }

  // Candidates come from the first model's peaks; every model then scores
  // the shared candidate list at the same map positions.
  struct Candidate {
    std::size_t mapIndex;
    Peak peak;
    Detection box;
  };
  std::vector<Candidate> candidates;
  for (std::size_t k = 0; k < probMaps[0].size(); ++k) {
    const ResponseMap& map = probMaps[0][k];
    for (const Peak& p : peaks(map, config.tau)) {
      Candidate c;
      c.mapIndex = k;
      c.peak = p;
      c.box = backproject({p.row, p.col}, map.geometry, map.scale, image.height, image.width);
      c.box.score = p.score;
      candidates.push_back(c);
    }
  }

  std::vector<Detection> boxes;
  if (models.size() > 1) {
    std::vector<std::vector<double>> perModel(models.size(),
                                              std::vector<double>(candidates.size(), 0.0));
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        const ResponseMap& map = probMaps[mi][candidates[ci].mapIndex];
        const Peak& p = candidates[ci].peak;
        const int r = std::min(p.row, map.scores.height - 1);
        const int c = std::min(p.col, map.scores.width - 1);
        perModel[mi][ci] = map.scores.at(r, c, 0);
      }
    }
    const EnsembleDecision dec = ensemble_combine(perModel, config.tau);
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      if (!dec.keep[ci]) continue;
      Detection d = candidates[ci].box;
      d.score = dec.score[ci];
      boxes.push_back(d);
    }
  } else {
    for (const Candidate& c : candidates) boxes.push_back(c.box);
  }

  if (regressor) {
    for (Detection& d : boxes) {
      const Tensor feats = window_features(image, models.front(), d);
      const double score = d.score;
      const double scale = d.scale;
      d = regress_box(feats, *regressor, d, image.height, image.width);
      d.score = score;
      d.scale = scale;
    }
  }

  return nms(std::move(boxes), config.iouThreshold);
}

}  // namespace dcf
