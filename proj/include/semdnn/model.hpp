#pragma once
#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "semdnn/quantize.hpp"
#include "semdnn/rng.hpp"
#include "semdnn/tensor.hpp"

namespace semdnn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Architecture description
// ---------------------------------------------------------------------------

struct BlockSpec {
  int out_c = 16;
  int stride = 1;     // applied by the first conv (and the shortcut)
  int convs = 2;      // 3x3 convs on the residual path
  bool exit_point = true;
};

struct ModelSpec {
  int in_h = 28, in_w = 28, in_c = 1;
  int stem_c = 16;                // 3x3 stem conv channels
  std::vector<BlockSpec> blocks;
  int n_classes = 10;

  // Residual CNN sized to roughly 88k parameters over 11 blocks.
  static ModelSpec mnist_default() {
    ModelSpec s;
    s.blocks = {
        {16, 1, 2, true}, {16, 1, 2, true}, {16, 1, 2, true}, {16, 1, 2, true},
        {20, 2, 2, true}, {20, 1, 2, true}, {20, 1, 2, true}, {20, 1, 2, true},
        {28, 2, 2, true}, {28, 1, 2, true}, {28, 1, 2, true}};
    return s;
  }

  void validate() const {
    if (blocks.empty()) throw std::invalid_argument("ModelSpec: no blocks");
    int exits = 0;
    for (auto& b : blocks) exits += b.exit_point ? 1 : 0;
    if (exits == 0) throw std::invalid_argument("ModelSpec: at least one exit point required");
    if (!blocks.back().exit_point)
      throw std::invalid_argument("ModelSpec: final block must be an exit point");
  }

  int block_in_c(int i) const { return i == 0 ? stem_c : blocks[i - 1].out_c; }

  int n_exits() const {
    int n = 0;
    for (auto& b : blocks) n += b.exit_point ? 1 : 0;
    return n;
  }

  // indices of blocks that carry an exit
  std::vector<int> exit_blocks() const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(blocks.size()); ++i)
      if (blocks[i].exit_point) out.push_back(i);
    return out;
  }

  // spatial size at the input of block i
  void block_in_hw(int i, int& h, int& w) const {
    h = in_h;
    w = in_w;
    for (int j = 0; j < i; ++j) {
      h = (h + blocks[j].stride - 1) / blocks[j].stride;
      w = (w + blocks[j].stride - 1) / blocks[j].stride;
    }
  }

  long long param_count() const;
};

// ---------------------------------------------------------------------------
// Full-precision parameters
// ---------------------------------------------------------------------------

struct ConvParam {
  Tensor w;        // [out_c, in_c, k, k]; dense layers use k = 1
  double scale = 1.0;  // digital per-layer scalar applied after the array
  int stride = 1;
  int pad = 0;

  int out_c() const { return w.shape[0]; }
  int in_c() const { return w.shape[1]; }
  int k() const { return w.shape[2]; }
};

struct ResBlock {
  std::vector<ConvParam> convs;        // residual path
  std::optional<ConvParam> shortcut;   // 1x1 projection when shape changes
};

struct Model {
  ModelSpec spec;
  ConvParam stem;
  std::vector<ResBlock> blocks;
  ConvParam fc;  // classifier head as a dense layer [n_classes, C, 1, 1]

  long long param_count() const {
    long long n = stem.w.size() + fc.w.size();
    for (auto& b : blocks) {
      for (auto& c : b.convs) n += c.w.size();
      if (b.shortcut) n += b.shortcut->w.size();
    }
    return n;
  }
};

inline long long ModelSpec::param_count() const {
  long long n = static_cast<long long>(stem_c) * in_c * 9;
  for (size_t i = 0; i < blocks.size(); ++i) {
    int ic = block_in_c(static_cast<int>(i));
    int oc = blocks[i].out_c;
    n += 9LL * ic * oc;
    for (int j = 1; j < blocks[i].convs; ++j) n += 9LL * oc * oc;
    if (ic != oc || blocks[i].stride != 1) n += static_cast<long long>(ic) * oc;
  }
  n += static_cast<long long>(blocks.back().out_c) * n_classes;
  return n;
}

inline ConvParam make_conv(int out_c, int in_c, int k, int stride, int pad, double init_std,
                           Rng& rng) {
  ConvParam c;
  c.w = Tensor({out_c, in_c, k, k});
  // Uniform, not Gaussian: the thirds-of-range quantizer keeps ~2/3 of
  // uniform weights nonzero, while a Gaussian leaves ~80% in the zero band
  // and the resulting near-empty kernels collapse all channels onto one
  // direction (rank-1 features, untrainable head).
  const double bound = init_std * 1.7320508075688772;  // same variance
  for (auto& v : c.w.values) v = rng.uniform(-bound, bound);
  c.stride = stride;
  c.pad = pad;
  // The ternary forward is scale * q(W); starting the digital scale at E|W|
  // keeps activation magnitudes near the full-precision ones from step one.
  double s = 0.0;
  for (double v : c.w.values) s += std::abs(v);
  c.scale = s / static_cast<double>(c.w.size());
  return c;
}

inline Model init_model(const ModelSpec& spec, Rng& rng, double init_scale = 1.0) {
  spec.validate();
  Model m;
  m.spec = spec;
  auto he = [&](int fan_in) { return init_scale * std::sqrt(2.0 / fan_in); };
  m.stem = make_conv(spec.stem_c, spec.in_c, 3, 1, 1, he(spec.in_c * 9), rng);
  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    const BlockSpec& bs = spec.blocks[i];
    int ic = spec.block_in_c(static_cast<int>(i));
    ResBlock b;
    b.convs.push_back(make_conv(bs.out_c, ic, 3, bs.stride, 1, he(ic * 9), rng));
    for (int j = 1; j < bs.convs; ++j)
      b.convs.push_back(make_conv(bs.out_c, bs.out_c, 3, 1, 1, he(bs.out_c * 9), rng));
    if (ic != bs.out_c || bs.stride != 1)
      b.shortcut = make_conv(bs.out_c, ic, 1, bs.stride, 0, he(ic), rng);
    m.blocks.push_back(std::move(b));
  }
  m.fc = make_conv(spec.n_classes, spec.blocks.back().out_c, 1, 1, 0,
                   he(spec.blocks.back().out_c), rng);
  return m;
}

// ---------------------------------------------------------------------------
// im2col convolution plumbing (column-major, K = in_c*k*k rows, P columns)
// ---------------------------------------------------------------------------

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline void im2col(const double* x, int c, int h, int w, int k, int stride, int pad,
                   MatrixXd& col) {
  const int oh = conv_out_dim(h, k, stride, pad);
  const int ow = conv_out_dim(w, k, stride, pad);
  col.resize(c * k * k, oh * ow);
  for (int ci = 0; ci < c; ++ci) {
    const double* xc = x + static_cast<long long>(ci) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const int row = (ci * k + ki) * k + kj;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * stride + ki - pad;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * stride + kj - pad;
            col(row, oi * ow + oj) =
                (ii >= 0 && ii < h && jj >= 0 && jj < w) ? xc[ii * w + jj] : 0.0;
          }
        }
      }
    }
  }
}

inline void col2im(const MatrixXd& col, int c, int h, int w, int k, int stride, int pad,
                   double* x) {
  const int oh = conv_out_dim(h, k, stride, pad);
  const int ow = conv_out_dim(w, k, stride, pad);
  std::fill(x, x + static_cast<long long>(c) * h * w, 0.0);
  for (int ci = 0; ci < c; ++ci) {
    double* xc = x + static_cast<long long>(ci) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const int row = (ci * k + ki) * k + kj;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) continue;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * stride + kj - pad;
            if (jj >= 0 && jj < w) xc[ii * w + jj] += col(row, oi * ow + oj);
          }
        }
      }
    }
  }
}

// weight matrix K x out_c, column per output channel
inline MatrixXd weight_matrix(const Tensor& w) {
  const int oc = w.shape[0], K = w.shape[1] * w.shape[2] * w.shape[3];
  MatrixXd m(K, oc);
  for (int o = 0; o < oc; ++o)
    for (int r = 0; r < K; ++r) m(r, o) = w.values[static_cast<long long>(o) * K + r];
  return m;
}

inline MatrixXd weight_matrix(const TernaryTensor& w) {
  const int oc = w.shape[0], K = w.shape[1] * w.shape[2] * w.shape[3];
  MatrixXd m(K, oc);
  for (int o = 0; o < oc; ++o)
    for (int r = 0; r < K; ++r) m(r, o) = static_cast<double>(w.values[static_cast<long long>(o) * K + r]);
  return m;
}

// ---------------------------------------------------------------------------
// Elementary ops
// ---------------------------------------------------------------------------

// Global average pooling: [C,H,W] feature map -> length-C vector.
inline Tensor gap(const Tensor& fm) {
  if (fm.shape.size() != 3) throw std::invalid_argument("gap: expected [C,H,W] feature map");
  const int c = fm.shape[0], h = fm.shape[1], w = fm.shape[2];
  if (h * w == 0) throw std::invalid_argument("gap: zero spatial extent");
  Tensor out({c});
  for (int ci = 0; ci < c; ++ci) {
    double s = 0.0;
    const double* p = fm.data() + static_cast<long long>(ci) * h * w;
    for (int i = 0; i < h * w; ++i) s += p[i];
    out.values[ci] = s / (h * w);
  }
  return out;
}

inline void relu_inplace(Tensor& t) {
  for (auto& v : t.values) v = v > 0.0 ? v : 0.0;
}

// ---------------------------------------------------------------------------
// Per-block ternary quantization (thresholds over all weights of the block)
// ---------------------------------------------------------------------------

struct QuantConv {
  TernaryTensor w;
  double scale = 1.0;
  int stride = 1;
  int pad = 0;
};

struct QuantBlock {
  std::vector<QuantConv> convs;
  std::optional<QuantConv> shortcut;
  TernaryThresholds thresholds{0.0, 0.0};
};

struct QuantModel {
  ModelSpec spec;
  QuantBlock stem;  // single-conv group
  std::vector<QuantBlock> blocks;
  QuantBlock fc;    // classifier head group

  long long param_count() const {
    long long n = stem.convs[0].w.size() + fc.convs[0].w.size();
    for (auto& b : blocks) {
      for (auto& c : b.convs) n += c.w.size();
      if (b.shortcut) n += b.shortcut->w.size();
    }
    return n;
  }
};

inline QuantConv quantize_conv(const ConvParam& c, const TernaryThresholds& t) {
  return {ternary_apply_tensor(c.w, t), c.scale, c.stride, c.pad};
}

inline QuantBlock quantize_block(const ResBlock& b) {
  std::vector<const Tensor*> group;
  for (auto& c : b.convs) group.push_back(&c.w);
  if (b.shortcut) group.push_back(&b.shortcut->w);
  QuantBlock q;
  q.thresholds = ternary_thresholds_group(group);
  for (auto& c : b.convs) q.convs.push_back(quantize_conv(c, q.thresholds));
  if (b.shortcut) q.shortcut = quantize_conv(*b.shortcut, q.thresholds);
  return q;
}

inline QuantBlock quantize_single(const ConvParam& c) {
  QuantBlock q;
  q.thresholds = ternary_thresholds(c.w.values);
  q.convs.push_back(quantize_conv(c, q.thresholds));
  return q;
}

inline QuantModel quantize_model(const Model& m) {
  QuantModel q;
  q.spec = m.spec;
  q.stem = quantize_single(m.stem);
  for (auto& b : m.blocks) q.blocks.push_back(quantize_block(b));
  q.fc = quantize_single(m.fc);
  return q;
}

}  // namespace semdnn
