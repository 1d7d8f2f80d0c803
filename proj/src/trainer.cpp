#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "dcf/oracle.hpp"
#include "dcf/trainer.hpp"
#include "rng.hpp"

namespace dcf {

namespace {

struct LayerCache {
  Tensor padded;            // conv: input after padding (valid: the input itself)
  Tensor preact;            // conv: linear output before ReLU
  Tensor input;             // pool/lcn: layer input
  std::vector<int> argmax;  // pool: flat value index into the layer input
};

Tensor pad_for(const Tensor& x, int k, Padding padding) {
  if (padding == Padding::Valid) return x;
  const int p = (k - 1) / 2;
  Tensor out(x.height + k - 1, x.width + k - 1, x.channels, 0.0);
  for (int r = 0; r < x.height; ++r) {
    const double* src = &x.values[static_cast<std::size_t>(r) * x.width * x.channels];
    double* dst = &out.values[(static_cast<std::size_t>(r + p) * out.width + p) * out.channels];
    std::copy(src, src + static_cast<std::size_t>(x.width) * x.channels, dst);
  }
  return out;
}

// Forward pass that keeps what the backward pass needs.
std::vector<double> forward_cached(const NetworkSpec& net, const Tensor& image, Padding padding,
                                   std::vector<LayerCache>& caches, std::vector<double>& fcScores,
                                   Tensor& fcInput) {
  caches.assign(net.layers.size(), {});
  Tensor x = image;
  std::vector<double> probs;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const LayerSpec& layer = net.layers[li];
    LayerCache& cache = caches[li];
    switch (layer.kind) {
      case LayerKind::Conv: {
        cache.padded = pad_for(x, layer.bank.size, padding);
        cache.preact = conv2d_direct(cache.padded, layer.bank, Padding::Valid);
        x = relu(cache.preact);
        break;
      }
      case LayerKind::Pool: {
        cache.input = x;
        const int s = layer.poolSize;
        const int oh = x.height / s;
        const int ow = x.width / s;
        if (oh < 1 || ow < 1) throw std::invalid_argument("window too small to pool");
        Tensor out(oh, ow, x.channels);
        cache.argmax.assign(out.count(), 0);
        for (int m = 0; m < oh; ++m) {
          for (int n = 0; n < ow; ++n) {
            for (int ch = 0; ch < x.channels; ++ch) {
              double best = x.at(s * m, s * n, ch);
              int bestIdx = ((s * m) * x.width + s * n) * x.channels + ch;
              for (int u = 0; u < s; ++u) {
                for (int v = 0; v < s; ++v) {
                  const double val = x.at(s * m + u, s * n + v, ch);
                  if (val > best) {
                    best = val;
                    bestIdx = ((s * m + u) * x.width + s * n + v) * x.channels + ch;
                  }
                }
              }
              out.at(m, n, ch) = best;
              cache.argmax[(static_cast<std::size_t>(m) * ow + n) * x.channels + ch] = bestIdx;
            }
          }
        }
        x = std::move(out);
        break;
      }
      case LayerKind::Lcn:
        cache.input = x;
        x = lcn_forward(x, layer.lcn);
        break;
      case LayerKind::Fc:
        fcInput = x;
        fcScores = fc_forward(x, layer.fc);
        break;
      case LayerKind::Softmax:
        probs = softmax(fcScores);
        break;
    }
  }
  return probs;
}

Tensor conv_backward(const LayerSpec& layer, const LayerCache& cache, const Tensor& grad,
                     Padding padding, LayerGrads& grads, bool needInputGrad) {
  const KernelBank& bank = layer.bank;
  const int k = bank.size;
  const Tensor& xp = cache.padded;
  const int ci = xp.channels;
  const int span = k * ci;
  Tensor dxp;
  if (needInputGrad) dxp = Tensor(xp.height, xp.width, ci, 0.0);
  for (int m = 0; m < grad.height; ++m) {
    for (int n = 0; n < grad.width; ++n) {
      for (int j = 0; j < bank.count; ++j) {
        // ReLU mask: dead units contribute nothing.
        if (cache.preact.at(m, n, j) <= 0.0) continue;
        const double gj = grad.at(m, n, j);
        if (gj == 0.0) continue;
        grads.biases[j] += gj;
        for (int u = 0; u < k; ++u) {
          const std::size_t rowOff = ((static_cast<std::size_t>(m + u)) * xp.width + n) * ci;
          const double* __restrict xrow = &xp.values[rowOff];
          const double* __restrict wrow = &bank.weights[(static_cast<std::size_t>(j) * k + u) * span];
          double* __restrict dwrow = &grads.weights[(static_cast<std::size_t>(j) * k + u) * span];
          if (needInputGrad) {
            double* __restrict dxrow = &dxp.values[rowOff];
            for (int t = 0; t < span; ++t) {
              dwrow[t] += gj * xrow[t];
              dxrow[t] += gj * wrow[t];
            }
          } else {
            for (int t = 0; t < span; ++t) dwrow[t] += gj * xrow[t];
          }
        }
      }
    }
  }
  if (!needInputGrad) return Tensor();
  if (padding == Padding::Valid) return dxp;
  const int p = (k - 1) / 2;
  Tensor dx(xp.height - k + 1, xp.width - k + 1, ci, 0.0);
  for (int r = 0; r < dx.height; ++r) {
    const double* src = &dxp.values[(static_cast<std::size_t>(r + p) * dxp.width + p) * ci];
    double* dst = &dx.values[static_cast<std::size_t>(r) * dx.width * ci];
    std::copy(src, src + static_cast<std::size_t>(dx.width) * ci, dst);
  }
  return dx;
}

Tensor lcn_backward(const LcnParams& params, const Tensor& x, const Tensor& grad) {
  const int ch = x.channels;
  const int half = params.r / 2;
  Tensor dx(x.height, x.width, ch, 0.0);
  std::vector<double> denomPow(ch), q(ch);
  for (int m = 0; m < x.height; ++m) {
    for (int n = 0; n < x.width; ++n) {
      const double* xv = &x.values[(static_cast<std::size_t>(m) * x.width + n) * ch];
      const double* gv = &grad.values[(static_cast<std::size_t>(m) * x.width + n) * ch];
      double* dv = &dx.values[(static_cast<std::size_t>(m) * x.width + n) * ch];
      for (int j = 0; j < ch; ++j) {
        const int lo = std::max(0, j - half);
        const int hi = std::min(ch - 1, j + half);
        double sum = 0.0;
        for (int i = lo; i <= hi; ++i) sum += xv[i] * xv[i];
        const double denom = params.kappa + params.alpha * sum;
        denomPow[j] = detail::pow_neg(denom, params.beta);
        q[j] = gv[j] * xv[j] * denomPow[j] / denom;
      }
      for (int kk = 0; kk < ch; ++kk) {
        const int lo = std::max(0, kk - half);
        const int hi = std::min(ch - 1, kk + half);
        double cross = 0.0;
        for (int j = lo; j <= hi; ++j) cross += q[j];
        dv[kk] = gv[kk] * denomPow[kk] - 2.0 * params.alpha * params.beta * xv[kk] * cross;
      }
    }
  }
  return dx;
}

void backward_sample(const NetworkSpec& net, const Tensor& image, int label, Padding padding,
                     double weight, Gradients& grads) {
  std::vector<LayerCache> caches;
  std::vector<double> fcScores;
  Tensor fcInput;
  const std::vector<double> probs = forward_cached(net, image, padding, caches, fcScores, fcInput);
  if (probs.empty()) throw std::invalid_argument("network must end in FC + softmax to train");

  grads.loss += -std::log(std::max(probs[label], 1e-300)) * weight;

  // Softmax + cross-entropy.
  std::vector<double> gScores(probs.size());
  for (std::size_t c = 0; c < probs.size(); ++c)
    gScores[c] = (probs[c] - (static_cast<int>(c) == label ? 1.0 : 0.0)) * weight;

  // Walk layers in reverse, carrying the gradient tensor.
  Tensor grad;
  for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
    const LayerSpec& layer = net.layers[li];
    LayerCache& cache = caches[li];
    switch (layer.kind) {
      case LayerKind::Softmax:
        break;
      case LayerKind::Fc: {
        const FcWeights& fc = layer.fc;
        const std::size_t len = static_cast<std::size_t>(fc.inputLength());
        grad = Tensor(fc.inHeight, fc.inWidth, fc.inChannels, 0.0);
        for (int o = 0; o < fc.outCount; ++o) {
          const double go = gScores[o];
          grads.layers[li].biases[o] += go;
          if (go == 0.0) continue;
          const double* w = &fc.weights[static_cast<std::size_t>(o) * len];
          double* dw = &grads.layers[li].weights[static_cast<std::size_t>(o) * len];
          for (std::size_t t = 0; t < len; ++t) {
            dw[t] += go * fcInput.values[t];
            grad.values[t] += go * w[t];
          }
        }
        break;
      }
      case LayerKind::Pool: {
        Tensor dx(cache.input.height, cache.input.width, cache.input.channels, 0.0);
        for (std::size_t t = 0; t < grad.count(); ++t) dx.values[cache.argmax[t]] += grad.values[t];
        grad = std::move(dx);
        break;
      }
      case LayerKind::Lcn:
        grad = lcn_backward(layer.lcn, cache.input, grad);
        break;
      case LayerKind::Conv:
        grad = conv_backward(layer, cache, grad, padding, grads.layers[li], li > 0);
        break;
    }
  }
}

Gradients make_zero_grads(const NetworkSpec& net) {
  Gradients g;
  g.layers.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    if (layer.kind == LayerKind::Conv) {
      g.layers[i].weights.assign(layer.bank.weights.size(), 0.0);
      g.layers[i].biases.assign(layer.bank.biases.size(), 0.0);
    } else if (layer.kind == LayerKind::Fc) {
      g.layers[i].weights.assign(layer.fc.weights.size(), 0.0);
      g.layers[i].biases.assign(layer.fc.biases.size(), 0.0);
    }
  }
  return g;
}

}  // namespace

Gradients backward(const NetworkSpec& net, const std::vector<Sample>& batch, Padding padding) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  Gradients grads = make_zero_grads(net);
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const Sample& s : batch) backward_sample(net, s.image, s.label, padding, weight, grads);
  return grads;
}

double batch_loss(const NetworkSpec& net, const std::vector<Sample>& batch, Padding padding) {
  double loss = 0.0;
  for (const Sample& s : batch) {
    const std::vector<double> probs = window_forward(s.image, net, padding);
    loss += -std::log(std::max(probs[s.label], 1e-300));
  }
  return loss / static_cast<double>(batch.size());
}

void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
              std::vector<double>& velocity, double eps, double mom, double wc) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw std::invalid_argument("sgd_step shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mom * velocity[i] - eps * (grads[i] + wc * params[i]);
    params[i] += velocity[i];
  }
}

double classification_precision(const NetworkSpec& net, const std::vector<Sample>& samples) {
  if (samples.empty()) return 0.0;
  int correct = 0;
  for (const Sample& s : samples) {
    const std::vector<double> probs = window_forward(s.image, net, Padding::Same);
    const int pred = probs[1] > probs[0] ? 1 : 0;
    if (pred == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainResult train(const TrainConfig& cfg, const SyntheticDataset& dataset, int trainCount,
                  NetworkSpec net) {
  if (trainCount <= 0 || trainCount > static_cast<int>(dataset.samples.size()))
    throw std::invalid_argument("bad train/validation split");
  net.validate(Padding::Same);

  const std::vector<Sample> trainSet(dataset.samples.begin(), dataset.samples.begin() + trainCount);
  const std::vector<Sample> valSet(dataset.samples.begin() + trainCount, dataset.samples.end());

  std::vector<LayerGrads> velocity(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    if (layer.kind == LayerKind::Conv) {
      velocity[i].weights.assign(layer.bank.weights.size(), 0.0);
      velocity[i].biases.assign(layer.bank.biases.size(), 0.0);
    } else if (layer.kind == LayerKind::Fc) {
      velocity[i].weights.assign(layer.fc.weights.size(), 0.0);
      velocity[i].biases.assign(layer.fc.biases.size(), 0.0);
    }
  }

  std::mt19937 order(cfg.seed * 2654435761u + 17u);
  std::vector<int> indices(trainSet.size());
  std::iota(indices.begin(), indices.end(), 0);

  TrainResult result;
  result.net = std::move(net);
  for (int epoch = 0; epoch < cfg.maxEpochs; ++epoch) {
    detail::shuffle(indices, order);
    for (std::size_t start = 0; start < indices.size(); start += cfg.batchSize) {
      std::vector<Sample> batch;
      const std::size_t end = std::min(indices.size(), start + cfg.batchSize);
      batch.reserve(end - start);
      for (std::size_t t = start; t < end; ++t) batch.push_back(trainSet[indices[t]]);
      Gradients grads = backward(result.net, batch, Padding::Same);
      if (!std::isfinite(grads.loss))
        throw std::runtime_error("training diverged: loss is not finite at epoch " +
                                 std::to_string(epoch + 1));
      for (std::size_t li = 0; li < result.net.layers.size(); ++li) {
        LayerSpec& layer = result.net.layers[li];
        if (layer.kind == LayerKind::Conv) {
          sgd_step(layer.bank.weights, grads.layers[li].weights, velocity[li].weights,
                   layer.hyper.epsW, layer.hyper.momW, layer.hyper.wc);
          sgd_step(layer.bank.biases, grads.layers[li].biases, velocity[li].biases,
                   layer.hyper.epsB, layer.hyper.momB, 0.0);
        } else if (layer.kind == LayerKind::Fc) {
          sgd_step(layer.fc.weights, grads.layers[li].weights, velocity[li].weights,
                   layer.hyper.epsW, layer.hyper.momW, layer.hyper.wc);
          sgd_step(layer.fc.biases, grads.layers[li].biases, velocity[li].biases,
                   layer.hyper.epsB, layer.hyper.momB, 0.0);
        }
      }
    }
    result.epochsRun = epoch + 1;
    result.validationPrecision = classification_precision(result.net, valSet);
    result.precisionCurve.push_back(result.validationPrecision);
    if (result.validationPrecision >= cfg.targetPrecision) break;
  }
  return result;
}

RegressorTrainResult train_regressor(const RegressorConfig& cfg,
                                     const std::vector<ProposalCase>& cases) {
  if (cases.empty()) throw std::invalid_argument("no regressor training cases");
  const Tensor& f0 = cases.front().features;
  const int featLen = static_cast<int>(f0.count());

  RegressorTrainResult result;
  result.weights.hidden = FcWeights(cfg.hiddenUnits, f0.height, f0.width, f0.channels);
  result.weights.output = FcWeights(4, 1, 1, cfg.hiddenUnits);
  std::mt19937 g(cfg.seed);
  for (double& w : result.weights.hidden.weights) w = detail::gauss(g) * 0.02;
  for (double& w : result.weights.output.weights) w = detail::gauss(g) * 0.02;

  std::vector<std::array<double, 4>> targets(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i)
    targets[i] = box_delta_targets(cases[i].proposal, cases[i].truth);

  FcWeights& hid = result.weights.hidden;
  FcWeights& out = result.weights.output;
  std::vector<double> gHw(hid.weights.size()), gHb(hid.biases.size());
  std::vector<double> gOw(out.weights.size()), gOb(out.biases.size());
  std::vector<double> hiddenAct(cfg.hiddenUnits);

  auto epoch_pass = [&](bool wantGrads) {
    if (wantGrads) {
      std::fill(gHw.begin(), gHw.end(), 0.0);
      std::fill(gHb.begin(), gHb.end(), 0.0);
      std::fill(gOw.begin(), gOw.end(), 0.0);
      std::fill(gOb.begin(), gOb.end(), 0.0);
    }
    double mse = 0.0;
    const double invN = 1.0 / static_cast<double>(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const double* feat = cases[i].features.values.data();
      for (int hIdx = 0; hIdx < cfg.hiddenUnits; ++hIdx) {
        const double* w = &hid.weights[static_cast<std::size_t>(hIdx) * featLen];
        double acc = hid.biases[hIdx];
        for (int t = 0; t < featLen; ++t) acc += w[t] * feat[t];
        hiddenAct[hIdx] = acc > 0.0 ? acc : 0.0;
      }
      std::array<double, 4> pred{};
      for (int o = 0; o < 4; ++o) {
        const double* w = &out.weights[static_cast<std::size_t>(o) * cfg.hiddenUnits];
        double acc = out.biases[o];
        for (int hIdx = 0; hIdx < cfg.hiddenUnits; ++hIdx) acc += w[hIdx] * hiddenAct[hIdx];
        pred[o] = acc;
      }
      std::array<double, 4> err{};
      for (int o = 0; o < 4; ++o) {
        err[o] = pred[o] - targets[i][o];
        mse += err[o] * err[o] * invN / 4.0;
      }
      if (!wantGrads) continue;
      std::vector<double> gHidden(cfg.hiddenUnits, 0.0);
      for (int o = 0; o < 4; ++o) {
        const double go = 2.0 * err[o] * invN / 4.0;
        gOb[o] += go;
        const double* w = &out.weights[static_cast<std::size_t>(o) * cfg.hiddenUnits];
        double* dw = &gOw[static_cast<std::size_t>(o) * cfg.hiddenUnits];
        for (int hIdx = 0; hIdx < cfg.hiddenUnits; ++hIdx) {
          dw[hIdx] += go * hiddenAct[hIdx];
          gHidden[hIdx] += go * w[hIdx];
        }
      }
      for (int hIdx = 0; hIdx < cfg.hiddenUnits; ++hIdx) {
        if (hiddenAct[hIdx] <= 0.0) continue;
        const double gh = gHidden[hIdx];
        gHb[hIdx] += gh;
        double* dw = &gHw[static_cast<std::size_t>(hIdx) * featLen];
        for (int t = 0; t < featLen; ++t) dw[t] += gh * feat[t];
      }
    }
    return mse;
  };

  auto apply = [](std::vector<double>& p, const std::vector<double>& g, double lr) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  };

  // Full-batch descent with backtracking: a step is kept only if it lowers
  // the loss, so the curve is monotone regardless of the feature scale.
  double lr = cfg.learningRate;
  std::vector<double> vHw(hid.weights.size(), 0.0), vHb(hid.biases.size(), 0.0);
  std::vector<double> vOw(out.weights.size(), 0.0), vOb(out.biases.size(), 0.0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double mse = epoch_pass(true);
    if (!std::isfinite(mse))
      throw std::runtime_error("regressor training diverged at epoch " + std::to_string(epoch + 1));
    result.mseCurve.push_back(mse);

    if (cfg.momentum > 0.0) {
      sgd_step(hid.weights, gHw, vHw, lr, cfg.momentum, 0.0);
      sgd_step(hid.biases, gHb, vHb, lr, cfg.momentum, 0.0);
      sgd_step(out.weights, gOw, vOw, lr, cfg.momentum, 0.0);
      sgd_step(out.biases, gOb, vOb, lr, cfg.momentum, 0.0);
      continue;
    }

    const std::vector<double> sHw = hid.weights, sHb = hid.biases;
    const std::vector<double> sOw = out.weights, sOb = out.biases;
    bool stepped = false;
    for (int tries = 0; tries < 40; ++tries) {
      apply(hid.weights, gHw, lr);
      apply(hid.biases, gHb, lr);
      apply(out.weights, gOw, lr);
      apply(out.biases, gOb, lr);
      if (epoch_pass(false) <= mse) {
        stepped = true;
        lr *= 1.1;
        break;
      }
      hid.weights = sHw;
      hid.biases = sHb;
      out.weights = sOw;
      out.biases = sOb;
      lr *= 0.5;
    }
    if (!stepped) break;  // no descent progress left at double precision
  }
  result.mseCurve.push_back(epoch_pass(false));
  return result;
}

}  // namespace dcf
