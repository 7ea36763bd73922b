#pragma once
#include <functional>
#include <numeric>
#include <ostream>

#include "semdnn/data.hpp"
#include "semdnn/mapped.hpp"
#include "semdnn/model.hpp"

namespace semdnn {

struct TrainConfig {
  // Adam keeps the quantized forward moving: per-weight SGD updates are far
  // smaller than the ternary threshold widths, so the discrete weights freeze
  // and the loss stalls near chance level.
  std::string optimizer = "adam";  // "adam" | "sgd"
  double lr = 0.002;
  double momentum = 0.9;   // sgd momentum / adam beta1
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled weight decay on conv/fc weights (scales exempt). Terminal-phase
  // training with decay tightens within-class GAP clusters, which the ternary
  // semantic centers need far more than the softmax head does.
  double weight_decay = 0.0;
  // Semantic-alignment auxiliary loss: at every exit, cross-entropy over
  // temperature-scaled cosine similarities between the GAP vector and running
  // (EMA) class centers. Head-only training leaves early-exit GAP features
  // class-agnostic, so the cosine searches the exits rely on carry no signal;
  // this term trains the backbone and the semantic memory jointly without
  // adding any exit parameters. 0 disables it.
  double semantic_weight = 0.0;
  double semantic_tau = 10.0;    // logit temperature on cosines in [-1, 1]
  double semantic_ema = 0.9;     // center EMA decay per step
  int epochs = 20;
  int batch = 64;
  std::uint64_t seed = 42;
  double init_scale = 1.0;
  bool quantize = true;     // forward through ternary weights (STE); false = plain training
  bool cosine_lr = true;

  void validate() const {
    if (optimizer != "adam" && optimizer != "sgd")
      throw std::invalid_argument("TrainConfig: unknown optimizer '" + optimizer + "'");
    if (lr < 0) throw std::invalid_argument("TrainConfig: lr < 0");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs < 1");
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch < 1");
    if (weight_decay < 0) throw std::invalid_argument("TrainConfig: weight_decay < 0");
    if (semantic_weight < 0) throw std::invalid_argument("TrainConfig: semantic_weight < 0");
    if (semantic_tau <= 0) throw std::invalid_argument("TrainConfig: semantic_tau <= 0");
    if (semantic_ema < 0 || semantic_ema >= 1)
      throw std::invalid_argument("TrainConfig: semantic_ema outside [0, 1)");
  }
};

namespace detail {

// Effective per-conv forward weights for one optimization step.
struct StepWeights {
  std::vector<MatrixXd> mats;    // K x out_c, one per conv in traversal order
  std::vector<double> scales;
};

// traversal order: stem, (block convs..., block shortcut), fc
template <typename F>
void for_each_conv(Model& m, F&& f) {
  f(m.stem);
  for (auto& b : m.blocks) {
    for (auto& c : b.convs) f(c);
    if (b.shortcut) f(*b.shortcut);
  }
  f(m.fc);
}
template <typename F>
void for_each_conv(const Model& m, F&& f) {
  f(m.stem);
  for (auto& b : m.blocks) {
    for (auto& c : b.convs) f(c);
    if (b.shortcut) f(*b.shortcut);
  }
  f(m.fc);
}

inline StepWeights step_weights(const Model& m, bool quantize) {
  StepWeights sw;
  if (quantize) {
    const QuantModel q = quantize_model(m);
    auto push = [&](const QuantConv& c) {
      sw.mats.push_back(weight_matrix(c.w));
      sw.scales.push_back(c.scale);
    };
    push(q.stem.convs[0]);
    for (auto& b : q.blocks) {
      for (auto& c : b.convs) push(c);
      if (b.shortcut) push(*b.shortcut);
    }
    push(q.fc.convs[0]);
  } else {
    for_each_conv(m, [&](const ConvParam& c) {
      sw.mats.push_back(weight_matrix(c.w));
      sw.scales.push_back(c.scale);
    });
  }
  return sw;
}

struct ConvCache {
  MatrixXd col;   // K x P
  MatrixXd raw;   // out_c x P, pre-scale array output
  int in_h = 0, in_w = 0, oh = 0, ow = 0;
};

// Semantic-alignment auxiliary targets for one optimization step. `centers`
// holds one dim x n_classes matrix per block (empty matrix = no exit there or
// not yet initialized); treated as constants within the step.
struct SemanticAux {
  const std::vector<MatrixXd>* centers = nullptr;
  double weight = 0.0;
  double tau = 10.0;
  std::vector<VectorXd>* gaps_out = nullptr;  // per-block GAP vectors, for the EMA update
};

}  // namespace detail

// Gradients share the Model layout (w holds dL/dW, scale holds dL/dscale).
inline Model zero_like(const Model& m) {
  Model g = m;
  detail::for_each_conv(g, [](ConvParam& c) {
    std::fill(c.w.values.begin(), c.w.values.end(), 0.0);
    c.scale = 0.0;
  });
  return g;
}

// Forward + backward for one sample. Quantized weights are used in the
// forward pass; gradients flow to the full-precision weights as if the
// quantizer were the identity (straight-through estimator). Returns the
// cross-entropy loss and accumulates into `grads`.
inline double forward_backward(const Model& m, const detail::StepWeights& sw,
                               const Tensor& image, int label, Model& grads,
                               const detail::SemanticAux* aux = nullptr) {
  const ModelSpec& spec = m.spec;
  size_t li = 0;  // conv index in traversal order

  std::vector<detail::ConvCache> caches;
  auto conv_fwd = [&](const Tensor& x, int k, int stride, int pad, int out_c) {
    detail::ConvCache cc;
    cc.in_h = x.shape[1];
    cc.in_w = x.shape[2];
    cc.oh = conv_out_dim(cc.in_h, k, stride, pad);
    cc.ow = conv_out_dim(cc.in_w, k, stride, pad);
    im2col(x.data(), x.shape[0], cc.in_h, cc.in_w, k, stride, pad, cc.col);
    cc.raw = sw.mats[li].transpose() * cc.col;
    Tensor out({out_c, cc.oh, cc.ow});
    Eigen::Map<Eigen::MatrixXd>(out.data(), cc.oh * cc.ow, out_c) =
        (sw.scales[li] * cc.raw).transpose();
    caches.push_back(std::move(cc));
    ++li;
    return out;
  };

  // ---- forward ----
  std::vector<Tensor> block_inputs;   // input of each block
  std::vector<std::vector<Tensor>> path_pre;  // pre-relu conv outputs per block
  std::vector<VectorXd> block_gaps;   // GAP of each block output (aux loss only)
  Tensor cur = conv_fwd(image, 3, 1, 1, spec.stem_c);
  Tensor stem_pre = cur;
  relu_inplace(cur);

  for (size_t bi = 0; bi < m.blocks.size(); ++bi) {
    block_inputs.push_back(cur);
    std::vector<Tensor> pres;
    Tensor v = cur;
    for (auto& c : m.blocks[bi].convs) {
      v = conv_fwd(v, c.k(), c.stride, c.pad, c.out_c());
      pres.push_back(v);
      relu_inplace(v);
    }
    Tensor sc = m.blocks[bi].shortcut
                    ? conv_fwd(cur, 1, m.blocks[bi].shortcut->stride, 0,
                               m.blocks[bi].shortcut->out_c())
                    : cur;
    for (long long i = 0; i < v.size(); ++i) v.values[i] += sc.values[i];
    path_pre.push_back(std::move(pres));
    cur = v;
    if (aux) {
      Tensor bg = gap(cur);
      block_gaps.push_back(Eigen::Map<const VectorXd>(bg.data(), bg.size()));
    }
  }
  if (aux && aux->gaps_out) *aux->gaps_out = block_gaps;

  Tensor g = gap(cur);
  Tensor gin({spec.blocks.back().out_c, 1, 1}, g.values);
  Tensor logits_t = conv_fwd(gin, 1, 1, 0, spec.n_classes);
  VectorXd logits = Eigen::Map<const VectorXd>(logits_t.data(), logits_t.size());

  // softmax cross-entropy
  const double zmax = logits.maxCoeff();
  VectorXd p = (logits.array() - zmax).exp();
  p /= p.sum();
  double loss = -std::log(std::max(p[label], 1e-300));

  // Per-exit semantic-alignment terms; gradients w.r.t. each block's GAP.
  std::vector<VectorXd> dgap_aux(m.blocks.size());
  if (aux && aux->weight > 0.0 && aux->centers) {
    for (size_t bi = 0; bi < m.blocks.size(); ++bi) {
      const MatrixXd& C = (*aux->centers)[bi];
      const VectorXd& gv = block_gaps[bi];
      if (C.size() == 0) continue;
      const double gn = gv.norm();
      if (gn == 0.0) continue;
      const int nc = static_cast<int>(C.cols());
      VectorXd cosv(nc), cn(nc);
      bool usable = true;
      for (int c = 0; c < nc && usable; ++c) {
        cn[c] = C.col(c).norm();
        if (cn[c] == 0.0) usable = false;
        else cosv[c] = gv.dot(C.col(c)) / (gn * cn[c]);
      }
      if (!usable) continue;
      VectorXd z = aux->tau * cosv;
      VectorXd pe = (z.array() - z.maxCoeff()).exp();
      pe /= pe.sum();
      loss += aux->weight * -std::log(std::max(pe[label], 1e-300));
      VectorXd dg = VectorXd::Zero(gv.size());
      for (int c = 0; c < nc; ++c) {
        const double coef = aux->weight * aux->tau * (pe[c] - (c == label ? 1.0 : 0.0));
        dg += coef * (C.col(c) / (gn * cn[c]) - (cosv[c] / (gn * gn)) * gv);
      }
      dgap_aux[bi] = std::move(dg);
    }
  }
  if (!std::isfinite(loss)) throw std::runtime_error("training diverged: non-finite loss");

  // ---- backward ----
  // gradient Model uses the same traversal order for accumulation
  std::vector<Tensor*> gw;
  std::vector<double*> gs;
  detail::for_each_conv(grads, [&](ConvParam& c) {
    gw.push_back(&c.w);
    gs.push_back(&c.scale);
  });

  li = caches.size();  // walk caches backwards
  auto conv_bwd = [&](const MatrixXd& dz_scaled, int in_c, int k, int stride, int pad,
                      bool need_dx, Tensor* dx_out) {
    --li;
    const detail::ConvCache& cc = caches[li];
    // dz_scaled is dL/d(scale*raw), out_c x P
    const double scale = sw.scales[li];
    // per-output-element mean; the raw sum is ~1e4 x larger than weight
    // gradients and makes the shared scalar collapse before weights can move
    *gs[li] += (dz_scaled.array() * cc.raw.array()).sum() /
               static_cast<double>(cc.raw.size());
    MatrixXd dW = cc.col * dz_scaled.transpose() * scale;  // K x out_c
    // accumulate into [out_c, in_c, k, k] layout
    const int K = static_cast<int>(dW.rows());
    for (int o = 0; o < dW.cols(); ++o)
      for (int r = 0; r < K; ++r)
        gw[li]->values[static_cast<long long>(o) * K + r] += dW(r, o);
    if (need_dx) {
      MatrixXd dcol = sw.mats[li] * dz_scaled * scale;  // K x P
      dx_out->shape = {in_c, cc.in_h, cc.in_w};
      dx_out->values.assign(static_cast<size_t>(in_c) * cc.in_h * cc.in_w, 0.0);
      col2im(dcol, in_c, cc.in_h, cc.in_w, k, stride, pad, dx_out->data());
    }
  };

  // head
  MatrixXd dlogits(spec.n_classes, 1);
  for (int c = 0; c < spec.n_classes; ++c) dlogits(c, 0) = p[c] - (c == label ? 1.0 : 0.0);
  Tensor dgin;
  conv_bwd(dlogits, spec.blocks.back().out_c, 1, 1, 0, true, &dgin);

  // gap backward: broadcast mean gradient over spatial positions
  const int fc_ = cur.shape[0], fh = cur.shape[1], fw = cur.shape[2];
  Tensor dcur({fc_, fh, fw});
  for (int c = 0; c < fc_; ++c) {
    const double dv = dgin.values[c] / (fh * fw);
    for (int i = 0; i < fh * fw; ++i) dcur.values[static_cast<long long>(c) * fh * fw + i] = dv;
  }

  // blocks in reverse
  for (int bi = static_cast<int>(m.blocks.size()) - 1; bi >= 0; --bi) {
    const ResBlock& b = m.blocks[bi];
    const Tensor& x = block_inputs[bi];
    // dL/dy splits into the conv path (through the final relu) and shortcut
    Tensor dpath = dcur;  // gradient w.r.t. relu(last conv out)
    Tensor dx_total;
    // shortcut side
    if (b.shortcut) {
      const auto& cc = caches[li - 1];  // shortcut was the last conv of this block
      MatrixXd dsc(b.shortcut->out_c(), cc.oh * cc.ow);
      for (int o = 0; o < b.shortcut->out_c(); ++o)
        for (int pidx = 0; pidx < cc.oh * cc.ow; ++pidx)
          dsc(o, pidx) = dcur.values[static_cast<long long>(o) * cc.oh * cc.ow + pidx];
      conv_bwd(dsc, x.shape[0], 1, b.shortcut->stride, 0, true, &dx_total);
    } else {
      dx_total = dcur;
    }
    // conv path, last to first
    Tensor dv = std::move(dpath);
    for (int cj = static_cast<int>(b.convs.size()) - 1; cj >= 0; --cj) {
      // relu mask on the pre-activation of this conv
      const Tensor& pre = path_pre[bi][cj];
      for (long long i = 0; i < dv.size(); ++i)
        if (pre.values[i] <= 0.0) dv.values[i] = 0.0;
      MatrixXd dz(b.convs[cj].out_c(), dv.size() / b.convs[cj].out_c());
      const long long P = dv.size() / b.convs[cj].out_c();
      for (int o = 0; o < b.convs[cj].out_c(); ++o)
        for (long long pidx = 0; pidx < P; ++pidx) dz(o, pidx) = dv.values[o * P + pidx];
      Tensor dx;
      conv_bwd(dz, cj == 0 ? x.shape[0] : b.convs[cj].in_c(), b.convs[cj].k(),
               b.convs[cj].stride, b.convs[cj].pad, true, &dx);
      dv = std::move(dx);
    }
    for (long long i = 0; i < dv.size(); ++i) dv.values[i] += dx_total.values[i];
    dcur = std::move(dv);
  }

  // stem: relu mask then conv backward (no dx needed)
  for (long long i = 0; i < dcur.size(); ++i)
    if (stem_pre.values[i] <= 0.0) dcur.values[i] = 0.0;
  {
    const long long P = dcur.size() / spec.stem_c;
    MatrixXd dz(spec.stem_c, P);
    for (int o = 0; o < spec.stem_c; ++o)
      for (long long pidx = 0; pidx < P; ++pidx) dz(o, pidx) = dcur.values[o * P + pidx];
    conv_bwd(dz, spec.in_c, 3, 1, 1, false, nullptr);
  }
  return loss;
}

// Optimizer state: first/second moments (sgd uses m1 as the velocity).
struct OptimizerState {
  Model m1, m2;
  long long t = 0;
};

inline OptimizerState make_optimizer_state(const Model& m) {
  return {zero_like(m), zero_like(m), 0};
}

// One optimizer step over a batch. Returns the mean loss.
inline double ste_train_step(Model& m, OptimizerState& st, const Dataset& data,
                             const std::vector<size_t>& batch_idx, const TrainConfig& cfg,
                             double lr) {
  if (batch_idx.empty()) throw std::invalid_argument("ste_train_step: empty batch");
  Model grads = zero_like(m);
  const detail::StepWeights sw = detail::step_weights(m, cfg.quantize);
  double loss = 0.0;
  for (size_t i : batch_idx)
    loss += forward_backward(m, sw, data.image_tensor(i), data.labels[i], grads);
  loss /= static_cast<double>(batch_idx.size());

  const double inv = 1.0 / static_cast<double>(batch_idx.size());
  const bool adam = cfg.optimizer == "adam";
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.momentum, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  std::vector<ConvParam*> mp, m1p, m2p, gp;
  detail::for_each_conv(m, [&](ConvParam& c) { mp.push_back(&c); });
  detail::for_each_conv(st.m1, [&](ConvParam& c) { m1p.push_back(&c); });
  detail::for_each_conv(st.m2, [&](ConvParam& c) { m2p.push_back(&c); });
  detail::for_each_conv(grads, [&](ConvParam& c) { gp.push_back(&c); });
  auto update = [&](double& w, double& m1, double& m2, double g) {
    if (adam) {
      m1 = cfg.momentum * m1 + (1.0 - cfg.momentum) * g;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g * g;
      w -= lr * (m1 / bc1) / (std::sqrt(m2 / bc2) + cfg.eps);
    } else {
      m1 = cfg.momentum * m1 + g;
      w -= lr * m1;
    }
  };
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (size_t li = 0; li < mp.size(); ++li) {
    for (size_t j = 0; j < mp[li]->w.values.size(); ++j) {
      double& w = mp[li]->w.values[j];
      w *= decay;
      update(w, m1p[li]->w.values[j], m2p[li]->w.values[j], gp[li]->w.values[j] * inv);
    }
    update(mp[li]->scale, m1p[li]->scale, m2p[li]->scale, gp[li]->scale * inv);
  }
  return loss;
}

struct TrainResult {
  std::vector<double> epoch_loss;
  int steps = 0;
};

inline TrainResult train_model(Model& m, const Dataset& data, const TrainConfig& cfg,
                               std::ostream* log = nullptr) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train_model: empty dataset");
  OptimizerState state = make_optimizer_state(m);
  Rng shuffle_rng(cfg.seed ^ 0x5bf0f5319cc0a3b1ull);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const long long steps_per_epoch = (data.size() + cfg.batch - 1) / cfg.batch;
  const long long total_steps = steps_per_epoch * cfg.epochs;

  TrainResult result;
  long long step = 0;
  for (int ep = 0; ep < cfg.epochs; ++ep) {
    // Fisher-Yates with the seeded stream
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double epoch_loss = 0.0;
    long long nb = 0;
    for (size_t off = 0; off < order.size(); off += cfg.batch) {
      std::vector<size_t> batch(order.begin() + off,
                                order.begin() + std::min(off + cfg.batch, order.size()));
      const double t = static_cast<double>(step) / std::max<long long>(total_steps - 1, 1);
      const double lr = cfg.cosine_lr ? cfg.lr * 0.5 * (1.0 + std::cos(3.141592653589793 * t))
                                      : cfg.lr;
      epoch_loss += ste_train_step(m, state, data, batch, cfg, lr);
      ++nb;
      ++step;
    }
    result.epoch_loss.push_back(epoch_loss / nb);
    if (log)
      (*log) << "epoch " << (ep + 1) << "/" << cfg.epochs << " loss "
             << result.epoch_loss.back() << std::endl;
  }
  result.steps = static_cast<int>(step);
  return result;
}

}  // namespace semdnn
