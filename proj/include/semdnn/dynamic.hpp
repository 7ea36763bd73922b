#pragma once
#include <vector>

#include "semdnn/cam.hpp"
#include "semdnn/mapped.hpp"

namespace semdnn {

// Per-exit cosine-similarity thresholds. The final exit always classifies;
// its entry is carried for shape consistency but never consulted.
struct ExitPolicy {
  std::vector<double> thresholds;

  static ExitPolicy uniform(int n_exits, double theta) {
    return {std::vector<double>(static_cast<size_t>(n_exits), theta)};
  }
};

// Analytic operation counts per pipeline stage.
struct OpsProfile {
  OpCounts stem;
  std::vector<OpCounts> blocks;       // per block (convs + shortcut + adds)
  std::vector<OpCounts> exit_search;  // per exit (gap + CAM search)
  OpCounts head;                      // gap + classifier (static path only)
  std::vector<int> exit_blocks;

  long long block_macs(int i) const { return blocks[i].cim_mac; }
  long long cam_search_macs(int e) const { return exit_search[e].cam_compare; }

  // static backbone MACs: full depth, no classifier head, no CAM — the
  // budget-drop baseline so a never-exit policy lands exactly at zero drop
  long long static_macs() const {
    long long n = stem.cim_mac;
    for (auto& b : blocks) n += b.cim_mac;
    return n;
  }

  // MACs consumed by a sample leaving at exit index e
  long long dynamic_macs(int e, bool include_cam) const {
    long long n = stem.cim_mac;
    for (int i = 0; i <= exit_blocks[e]; ++i) n += blocks[i].cim_mac;
    if (include_cam)
      for (int j = 0; j <= e; ++j) n += cam_search_macs(j);
    return n;
  }

  OpCounts dynamic_ops(int e) const {
    OpCounts total = stem;
    for (int i = 0; i <= exit_blocks[e]; ++i) total += blocks[i];
    for (int j = 0; j <= e; ++j) total += exit_search[j];
    return total;
  }

  OpCounts static_ops() const {
    OpCounts total = stem;
    for (auto& b : blocks) total += b;
    total += head;
    return total;
  }
};

inline OpsProfile ops_profile(const ModelSpec& spec, int tile = 512) {
  spec.validate();
  OpsProfile p;
  p.exit_blocks = spec.exit_blocks();
  auto conv_counts = [&](int in_c, int out_c, int k, int oh, int ow) {
    OpCounts c;
    const long long P = static_cast<long long>(oh) * ow;
    c.cim_mac = P * out_c * in_c * k * k;
    const long long tiles = (static_cast<long long>(in_c) * k * k + tile - 1) / tile;
    c.cim_adc = P * out_c * tiles;
    return c;
  };

  int h = spec.in_h, w = spec.in_w;
  p.stem = conv_counts(spec.in_c, spec.stem_c, 3, h, w);
  p.stem.digital += static_cast<long long>(spec.stem_c) * h * w;  // relu

  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    const BlockSpec& bs = spec.blocks[i];
    const int ic = spec.block_in_c(static_cast<int>(i));
    const int oh = conv_out_dim(h, 3, bs.stride, 1);
    const int ow = conv_out_dim(w, 3, bs.stride, 1);
    OpCounts b = conv_counts(ic, bs.out_c, 3, oh, ow);
    b.digital += static_cast<long long>(bs.out_c) * oh * ow;  // relu
    for (int j = 1; j < bs.convs; ++j) {
      b += conv_counts(bs.out_c, bs.out_c, 3, oh, ow);
      b.digital += static_cast<long long>(bs.out_c) * oh * ow;
    }
    if (ic != bs.out_c || bs.stride != 1)
      b += conv_counts(ic, bs.out_c, 1, oh, ow);
    b.digital += static_cast<long long>(bs.out_c) * oh * ow;  // residual add
    p.blocks.push_back(b);
    h = oh;
    w = ow;

    if (bs.exit_point) {
      OpCounts s;
      s.digital += static_cast<long long>(bs.out_c) * oh * ow;  // gap
      s.cam_compare += static_cast<long long>(spec.n_classes) * bs.out_c;
      s.cam_adc += spec.n_classes;
      s.sort += spec.n_classes;
      p.exit_search.push_back(s);
    }
  }

  const int fin_c = spec.blocks.back().out_c;
  p.head.digital += static_cast<long long>(fin_c) * h * w;  // gap
  p.head.cim_mac += static_cast<long long>(spec.n_classes) * fin_c;
  p.head.cim_adc += spec.n_classes;
  return p;
}

// ---------------------------------------------------------------------------
// Traces and reports
// ---------------------------------------------------------------------------

struct SampleTrace {
  int label = -1;
  int prediction = -1;
  int exit_index = -1;
  long long macs = 0;           // backbone MACs actually consumed
  long long macs_with_cam = 0;  // plus the CAM search MACs
  OpCounts ops;
  std::vector<VectorXd> exit_similarities;  // one vector per visited exit
};

struct EvalReport {
  int n_samples = 0;
  double accuracy = 0.0;
  double dcb = 0.0;                     // 1 - mean dynamic MACs / static MACs
  double dcb_with_cam = 0.0;            // CAM search MACs charged to the dynamic path
  double mean_macs = 0.0;
  double mean_macs_with_cam = 0.0;
  long long static_macs = 0;
  std::vector<long long> exit_histogram;
  MatrixXd confusion;                   // rows: true label, cols: prediction
  OpCounts total_ops;                   // energy events over the dynamic path
  OpCounts static_total_ops;            // full static pass, summed over samples
};

// Per-sample, per-exit similarity matrix under one fixed noise realization.
// Threshold policies can then be evaluated without re-running the network.
struct SimilarityTable {
  int n_exits = 0, n_classes = 0;
  std::vector<int> labels;
  std::vector<MatrixXd> sims;  // per sample: n_exits x n_classes
};

// Early-exit decision rule: stop at the first exit whose top similarity is
// strictly above the threshold; the final exit always classifies.
inline int decide_exit(const MatrixXd& sims, const ExitPolicy& policy) {
  const int n_exits = static_cast<int>(sims.rows());
  for (int e = 0; e + 1 < n_exits; ++e)
    if (sims.row(e).maxCoeff() > policy.thresholds[e]) return e;
  return n_exits - 1;
}

// Sequential single-sample early-exit inference on an arbitrary backend.
inline SampleTrace infer_dynamic(const Tensor& image, int label, const MappedNetwork& net,
                                 const CenterBank& bank, const ExitPolicy& policy,
                                 const PipelineOptions& opt, Rng* rng = nullptr,
                                 const OpsProfile* profile = nullptr) {
  const auto exits = net.spec.exit_blocks();
  if (static_cast<int>(policy.thresholds.size()) != static_cast<int>(exits.size()))
    throw std::invalid_argument("infer_dynamic: policy/exit count mismatch");

  SampleTrace tr;
  tr.label = label;
  Tensor cur = conv_apply(image, net.stem, opt, rng, &tr.ops);
  relu_inplace(cur);
  tr.ops.digital += cur.size();

  int exit_index = -1;
  for (size_t b = 0, e = 0; b < net.blocks.size(); ++b) {
    cur = block_apply(cur, net.blocks[b], opt, rng, &tr.ops);
    if (static_cast<int>(b) != exits[e]) continue;
    Tensor g = gap(cur);
    tr.ops.digital += cur.size();
    VectorXd q = Eigen::Map<const VectorXd>(g.data(), g.size());
    SearchResult res = search(q, bank, static_cast<int>(e), opt, rng, &tr.ops);
    tr.exit_similarities.push_back(res.similarities);
    const bool last = (e + 1 == exits.size());
    if (last || res.similarities.maxCoeff() > policy.thresholds[e]) {
      tr.prediction = res.argmax;
      exit_index = static_cast<int>(e);
      break;
    }
    ++e;
  }
  tr.exit_index = exit_index;
  if (profile) {
    tr.macs = profile->dynamic_macs(exit_index, false);
    tr.macs_with_cam = profile->dynamic_macs(exit_index, true);
  } else {
    tr.macs = tr.macs_with_cam = tr.ops.cim_mac;
  }
  return tr;
}

// Build the per-exit similarity table with full-depth execution. Per-sample
// RNG substreams are derived from (seed, sample index); draws happen in the
// same order as sequential inference, so an early exit consumes a prefix of
// the same stream.
inline SimilarityTable build_similarity_table(const Dataset& data, const MappedNetwork& net,
                                              const CenterBank& bank,
                                              const PipelineOptions& opt,
                                              std::uint64_t seed = 0) {
  const auto exits = net.spec.exit_blocks();
  SimilarityTable t;
  t.n_exits = static_cast<int>(exits.size());
  t.n_classes = net.spec.n_classes;
  for (size_t i = 0; i < data.size(); ++i) {
    Rng rng(Rng::derive(seed, i));
    Rng* rp = opt.read_noise ? &rng : nullptr;
    Tensor cur = conv_apply(data.image_tensor(i), net.stem, opt, rp);
    relu_inplace(cur);
    MatrixXd sims(t.n_exits, t.n_classes);
    for (size_t b = 0, e = 0; b < net.blocks.size(); ++b) {
      cur = block_apply(cur, net.blocks[b], opt, rp);
      if (static_cast<int>(b) != exits[e]) continue;
      Tensor g = gap(cur);
      VectorXd q = Eigen::Map<const VectorXd>(g.data(), g.size());
      sims.row(e) = search(q, bank, static_cast<int>(e), opt, rp).similarities.transpose();
      ++e;
    }
    t.labels.push_back(data.labels[i]);
    t.sims.push_back(std::move(sims));
  }
  return t;
}

// Aggregate a threshold policy over a similarity table.
inline EvalReport evaluate_policy(const SimilarityTable& table, const OpsProfile& profile,
                                  const ExitPolicy& policy) {
  if (table.labels.empty()) throw std::invalid_argument("evaluate_policy: empty table");
  if (static_cast<int>(policy.thresholds.size()) != table.n_exits)
    throw std::invalid_argument("evaluate_policy: policy/exit count mismatch");
  EvalReport r;
  r.n_samples = static_cast<int>(table.labels.size());
  r.exit_histogram.assign(table.n_exits, 0);
  r.confusion = MatrixXd::Zero(table.n_classes, table.n_classes);
  r.static_macs = profile.static_macs();
  long long correct = 0;
  double sum_macs = 0, sum_macs_cam = 0;
  for (int i = 0; i < r.n_samples; ++i) {
    const MatrixXd& s = table.sims[i];
    const int e = decide_exit(s, policy);
    int pred = 0;
    for (int c = 1; c < table.n_classes; ++c)
      if (s(e, c) > s(e, pred)) pred = c;
    r.exit_histogram[e]++;
    r.confusion(table.labels[i], pred) += 1.0;
    if (pred == table.labels[i]) ++correct;
    sum_macs += static_cast<double>(profile.dynamic_macs(e, false));
    sum_macs_cam += static_cast<double>(profile.dynamic_macs(e, true));
    r.total_ops += profile.dynamic_ops(e);
    r.static_total_ops += profile.static_ops();
  }
  r.accuracy = static_cast<double>(correct) / r.n_samples;
  r.mean_macs = sum_macs / r.n_samples;
  r.mean_macs_with_cam = sum_macs_cam / r.n_samples;
  r.dcb = 1.0 - r.mean_macs / static_cast<double>(r.static_macs);
  r.dcb_with_cam = 1.0 - r.mean_macs_with_cam / static_cast<double>(r.static_macs);
  return r;
}

// Static evaluation through the classifier head.
inline double evaluate_static(const MappedNetwork& net, const Dataset& data,
                              const PipelineOptions& opt, std::uint64_t seed = 0,
                              std::vector<int>* predictions = nullptr) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_static: empty dataset");
  long long correct = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    Rng rng(Rng::derive(seed, i));
    Rng* rp = opt.read_noise ? &rng : nullptr;
    auto maps = forward_features(data.image_tensor(i), net, opt, rp);
    VectorXd logits = head_logits(maps.back(), net, opt, rp);
    Eigen::Index pi = 0;
    logits.maxCoeff(&pi);
    const int pred = static_cast<int>(pi);
    if (predictions) predictions->push_back(pred);
    if (pred == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

// Static semantic-memory classifier: full depth, CAM argmax at the last exit.
// This is what a never-exit policy reduces to.
inline double evaluate_semantic_static(const MappedNetwork& net, const CenterBank& bank,
                                       const Dataset& data, const PipelineOptions& opt,
                                       std::uint64_t seed = 0,
                                       std::vector<int>* predictions = nullptr) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_semantic_static: empty dataset");
  const ExitPolicy never = ExitPolicy::uniform(net.spec.n_exits(), 2.0);
  long long correct = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    Rng rng(Rng::derive(seed, i));
    Rng* rp = opt.read_noise ? &rng : nullptr;
    SampleTrace tr = infer_dynamic(data.image_tensor(i), data.labels[i], net, bank, never, opt, rp);
    if (predictions) predictions->push_back(tr.prediction);
    if (tr.prediction == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / data.size();
}

}  // namespace semdnn
