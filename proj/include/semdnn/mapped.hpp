#pragma once
#include <memory>
#include <optional>
#include <vector>

#include "semdnn/crossbar.hpp"
#include "semdnn/data.hpp"
#include "semdnn/model.hpp"
#include "semdnn/ops.hpp"

namespace semdnn {

// Analog pipeline settings shared by the software and crossbar backends so
// that the two are bit-identical when device noise is disabled.
struct PipelineOptions {
  int input_bits = 0;   // per-tensor symmetric activation quantization; 0 = off
  int adc_bits = 0;     // output converter resolution; 0 = ideal readout
  bool read_noise = false;
  int tile = 512;       // physical array rows/cols per tile (accounting)
};

// One conv (or dense) layer lowered to an effective weight matrix. The
// matrix is exact ternary for the software backend and the frozen programmed
// state for a crossbar backend; read noise, when enabled, is drawn from the
// crossbar per call.
struct MappedConv {
  MatrixXd w;           // K x out_c
  double scale = 1.0;
  int in_c = 0, out_c = 0, k = 1, stride = 1, pad = 0;
  std::shared_ptr<Crossbar> xbar;
  double adc_range = 0.0;  // full-scale |output| calibrated per layer
};

struct MappedBlock {
  std::vector<MappedConv> convs;
  std::optional<MappedConv> shortcut;
};

struct MappedNetwork {
  ModelSpec spec;
  MappedConv stem;
  std::vector<MappedBlock> blocks;
  MappedConv fc;
};

// Symmetric max-abs quantization to (2^(bits-1) - 1) signed levels. Scale
// invariant by construction; a zero tensor passes through unchanged.
inline void quantize_activations(Tensor& t, int bits) {
  if (bits <= 0) return;
  double m = 0.0;
  for (double v : t.values) m = std::max(m, std::abs(v));
  if (m == 0.0) return;
  const double levels = static_cast<double>((1 << (bits - 1)) - 1);
  for (auto& v : t.values) v = std::round(v / m * levels) * (m / levels);
}

inline long long row_tiles(const MappedConv& c, int tile) {
  return (static_cast<long long>(c.in_c) * c.k * c.k + tile - 1) / tile;
}

namespace detail {

inline void apply_adc(MatrixXd& z, double range, int bits, long long* saturations) {
  if (bits <= 0 || range <= 0.0) return;
  const double levels = static_cast<double>((1LL << (bits - 1)) - 1);
  const double step = range / levels;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      double q = std::round(z(i, j) / step);
      if (q > levels) {
        q = levels;
        if (saturations) ++(*saturations);
      } else if (q < -levels) {
        q = -levels;
        if (saturations) ++(*saturations);
      }
      z(i, j) = q * step;
    }
  }
}

}  // namespace detail

// One lowered conv layer: input quantization -> im2col MVM -> ADC -> digital scale.
inline Tensor conv_apply(const Tensor& x, const MappedConv& c, const PipelineOptions& opt,
                         Rng* rng = nullptr, OpCounts* ops = nullptr) {
  if (x.shape.size() != 3 || x.shape[0] != c.in_c)
    throw std::invalid_argument("conv_apply: input shape mismatch");
  Tensor xq = x;
  quantize_activations(xq, opt.input_bits);
  const int h = x.shape[1], w = x.shape[2];
  const int oh = conv_out_dim(h, c.k, c.stride, c.pad);
  const int ow = conv_out_dim(w, c.k, c.stride, c.pad);
  MatrixXd col;
  im2col(xq.data(), c.in_c, h, w, c.k, c.stride, c.pad, col);

  MatrixXd z;
  if (opt.read_noise && c.xbar) {
    // fresh device noise per MVM call (one call per output position)
    z.resize(c.out_c, col.cols());
    for (Eigen::Index p = 0; p < col.cols(); ++p)
      z.col(p) = c.xbar->effective_read(*rng).transpose() * col.col(p);
  } else {
    z = c.w.transpose() * col;
  }
  long long* sat = ops ? &ops->adc_saturations : nullptr;
  detail::apply_adc(z, c.adc_range, opt.adc_bits, sat);

  Tensor out({c.out_c, oh, ow});
  for (int o = 0; o < c.out_c; ++o)
    for (int p = 0; p < oh * ow; ++p)
      out.values[static_cast<long long>(o) * oh * ow + p] = c.scale * z(o, p);

  if (ops) {
    const long long P = static_cast<long long>(oh) * ow;
    ops->cim_mac += P * c.out_c * c.in_c * c.k * c.k;
    ops->cim_adc += P * c.out_c * row_tiles(c, opt.tile);
  }
  return out;
}

// Residual block: y = relu(conv path) + shortcut(x). No post-sum activation.
inline Tensor block_apply(const Tensor& x, const MappedBlock& b, const PipelineOptions& opt,
                          Rng* rng = nullptr, OpCounts* ops = nullptr) {
  Tensor v = x;
  for (auto& c : b.convs) {
    v = conv_apply(v, c, opt, rng, ops);
    relu_inplace(v);
    if (ops) ops->digital += v.size();
  }
  Tensor sc = b.shortcut ? conv_apply(x, *b.shortcut, opt, rng, ops) : x;
  if (sc.shape != v.shape) throw std::invalid_argument("block_apply: shortcut shape mismatch");
  for (long long i = 0; i < v.size(); ++i) v.values[i] += sc.values[i];
  if (ops) ops->digital += v.size();
  return v;
}

// Full-depth forward. Returns feature maps after the stem and every block.
inline std::vector<Tensor> forward_features(const Tensor& image, const MappedNetwork& net,
                                            const PipelineOptions& opt, Rng* rng = nullptr,
                                            OpCounts* ops = nullptr) {
  std::vector<Tensor> maps;
  Tensor cur = conv_apply(image, net.stem, opt, rng, ops);
  relu_inplace(cur);
  if (ops) ops->digital += cur.size();
  for (auto& b : net.blocks) {
    cur = block_apply(cur, b, opt, rng, ops);
    maps.push_back(cur);
  }
  return maps;
}

// Classifier head on the final block's pooled features.
inline VectorXd head_logits(const Tensor& final_map, const MappedNetwork& net,
                            const PipelineOptions& opt, Rng* rng = nullptr,
                            OpCounts* ops = nullptr) {
  Tensor g = gap(final_map);
  if (ops) ops->digital += final_map.size();
  Tensor gin({net.fc.in_c, 1, 1}, g.values);
  Tensor logits = conv_apply(gin, net.fc, opt, rng, ops);
  return Eigen::Map<const VectorXd>(logits.data(), logits.size());
}

// ---------------------------------------------------------------------------
// Lowering
// ---------------------------------------------------------------------------

namespace detail {

inline TernaryTensor to_2d(const TernaryTensor& w) {
  const int oc = w.shape[0];
  const int K = static_cast<int>(w.size() / oc);
  TernaryTensor t({K, oc});
  for (int o = 0; o < oc; ++o)
    for (int r = 0; r < K; ++r) t.values[static_cast<long long>(r) * oc + o] =
        w.values[static_cast<long long>(o) * K + r];
  return t;
}

inline MappedConv lower_quant(const QuantConv& q, const DeviceStats* stats, Rng* rng,
                              bool write_noise) {
  MappedConv c;
  c.out_c = q.w.shape[0];
  c.in_c = q.w.shape[1];
  c.k = q.w.shape[2];
  c.stride = q.stride;
  c.pad = q.pad;
  c.scale = q.scale;
  if (stats) {
    c.xbar = std::make_shared<Crossbar>(
        Crossbar::program(to_2d(q.w), *stats, *rng, write_noise));
    c.w = c.xbar->effective();
  } else {
    c.w = weight_matrix(q.w);
  }
  return c;
}

inline MappedConv lower_full(const ConvParam& p, const DeviceStats* stats, Rng* rng,
                             bool write_noise) {
  MappedConv c;
  c.out_c = p.out_c();
  c.in_c = p.in_c();
  c.k = p.k();
  c.stride = p.stride;
  c.pad = p.pad;
  MatrixXd wm = weight_matrix(p.w);
  if (stats) {
    const double wmax = std::max(wm.cwiseAbs().maxCoeff(), 1e-12);
    c.xbar = std::make_shared<Crossbar>(
        Crossbar::program_linear(wm / wmax, *stats, *rng, write_noise));
    c.w = c.xbar->effective();
    c.scale = p.scale * wmax;
  } else {
    c.w = std::move(wm);
    c.scale = p.scale;
  }
  return c;
}

}  // namespace detail

// Pure-software ternary network (exact {-1,0,1} effective weights).
inline MappedNetwork map_software(const QuantModel& q) {
  MappedNetwork n;
  n.spec = q.spec;
  n.stem = detail::lower_quant(q.stem.convs[0], nullptr, nullptr, false);
  for (auto& b : q.blocks) {
    MappedBlock mb;
    for (auto& c : b.convs) mb.convs.push_back(detail::lower_quant(c, nullptr, nullptr, false));
    if (b.shortcut) mb.shortcut = detail::lower_quant(*b.shortcut, nullptr, nullptr, false);
    n.blocks.push_back(std::move(mb));
  }
  n.fc = detail::lower_quant(q.fc.convs[0], nullptr, nullptr, false);
  return n;
}

// Ternary network programmed onto differential-pair crossbars.
inline MappedNetwork map_crossbar(const QuantModel& q, const DeviceStats& stats, Rng& rng,
                                  bool write_noise = true) {
  stats.validate();
  MappedNetwork n;
  n.spec = q.spec;
  n.stem = detail::lower_quant(q.stem.convs[0], &stats, &rng, write_noise);
  for (auto& b : q.blocks) {
    MappedBlock mb;
    for (auto& c : b.convs) mb.convs.push_back(detail::lower_quant(c, &stats, &rng, write_noise));
    if (b.shortcut) mb.shortcut = detail::lower_quant(*b.shortcut, &stats, &rng, write_noise);
    n.blocks.push_back(std::move(mb));
  }
  n.fc = detail::lower_quant(q.fc.convs[0], &stats, &rng, write_noise);
  return n;
}

// Full-precision network, in software or linearly mapped onto crossbars.
inline MappedNetwork map_fullprecision(const Model& m, const DeviceStats* stats = nullptr,
                                       Rng* rng = nullptr, bool write_noise = true) {
  MappedNetwork n;
  n.spec = m.spec;
  n.stem = detail::lower_full(m.stem, stats, rng, write_noise);
  for (auto& b : m.blocks) {
    MappedBlock mb;
    for (auto& c : b.convs) mb.convs.push_back(detail::lower_full(c, stats, rng, write_noise));
    if (b.shortcut) mb.shortcut = detail::lower_full(*b.shortcut, stats, rng, write_noise);
    n.blocks.push_back(std::move(mb));
  }
  n.fc = detail::lower_full(m.fc, stats, rng, write_noise);
  return n;
}

// Auto-calibrate per-layer ADC full-scale ranges from a calibration batch
// (noise-free forward, max |pre-scale output| per layer).
inline void calibrate_adc(MappedNetwork& net, const Dataset& calib, int input_bits) {
  PipelineOptions opt;
  opt.input_bits = input_bits;
  std::vector<MappedConv*> layers;
  layers.push_back(&net.stem);
  for (auto& b : net.blocks) {
    for (auto& c : b.convs) layers.push_back(&c);
    if (b.shortcut) layers.push_back(&*b.shortcut);
  }
  layers.push_back(&net.fc);
  for (auto* l : layers) l->adc_range = 0.0;

  // track ranges by rerunning forward with adc off; conv outputs divided by
  // scale recover the raw array output
  for (size_t s = 0; s < calib.size(); ++s) {
    Tensor img = calib.image_tensor(s);
    // manual forward mirroring forward_features, recording per-layer maxima
    size_t li = 0;
    auto track = [&](const Tensor& pre_scaled, const MappedConv& c) {
      double m = 0.0;
      for (double v : pre_scaled.values) m = std::max(m, std::abs(v / (c.scale != 0 ? c.scale : 1.0)));
      layers[li]->adc_range = std::max(layers[li]->adc_range, m);
      ++li;
    };
    Tensor cur = conv_apply(img, net.stem, opt);
    track(cur, net.stem);
    relu_inplace(cur);
    for (auto& b : net.blocks) {
      Tensor v = cur;
      for (auto& c : b.convs) {
        v = conv_apply(v, c, opt);
        track(v, c);
        relu_inplace(v);
      }
      Tensor sc = b.shortcut ? conv_apply(cur, *b.shortcut, opt) : cur;
      if (b.shortcut) track(sc, *b.shortcut);
      for (long long i = 0; i < v.size(); ++i) v.values[i] += sc.values[i];
      cur = v;
    }
    Tensor g = gap(cur);
    Tensor gin({net.fc.in_c, 1, 1}, g.values);
    Tensor logits = conv_apply(gin, net.fc, opt);
    track(logits, net.fc);
  }
}

}  // namespace semdnn
