#pragma once
#include <Eigen/Dense>
#include <iostream>
#include <memory>
#include <vector>

#include "semdnn/crossbar.hpp"
#include "semdnn/mapped.hpp"

namespace semdnn {

struct SearchResult {
  VectorXd similarities;  // per class, in [-1, 1]
  int argmax = -1;
  double margin = 0.0;    // top1 - top2
  bool zero_center_seen = false;
};

// Per-exit class centers held in content-addressable memory. `exact` is the
// effective stored value per cell (ternary levels, or the frozen programmed
// state when device-backed); `cams` keeps conductances for the read path.
struct CenterBank {
  int n_classes = 0;
  bool ternary = true;
  std::vector<int> exit_blocks;                  // block index carrying each exit
  std::vector<TernaryTensor> centers;            // per exit, [n_classes, dim] (ternary banks)
  std::vector<MatrixXd> exact;                   // per exit, dim x n_classes
  std::vector<std::shared_ptr<Crossbar>> cams;   // nullable when purely software

  int n_exits() const { return static_cast<int>(exact.size()); }
  int dim(int exit) const { return static_cast<int>(exact[exit].rows()); }

  long long total_values() const {
    long long n = 0;
    for (auto& m : exact) n += m.size();
    return n;
  }
};

// Class-mean GAP vectors per exit (full-depth forward over the training set).
inline std::vector<MatrixXd> class_mean_gap(const Dataset& train, const MappedNetwork& net,
                                            const PipelineOptions& opt) {
  const auto exits = net.spec.exit_blocks();
  const int n_classes = net.spec.n_classes;
  std::vector<MatrixXd> sums;
  std::vector<std::vector<long long>> counts(exits.size(),
                                             std::vector<long long>(n_classes, 0));
  for (size_t e = 0; e < exits.size(); ++e)
    sums.push_back(MatrixXd::Zero(net.spec.blocks[exits[e]].out_c, n_classes));

  for (size_t i = 0; i < train.size(); ++i) {
    Tensor img = train.image_tensor(i);
    const int y = train.labels[i];
    auto maps = forward_features(img, net, opt);
    for (size_t e = 0; e < exits.size(); ++e) {
      Tensor g = gap(maps[exits[e]]);
      sums[e].col(y) += Eigen::Map<const VectorXd>(g.data(), g.size());
      counts[e][y]++;
    }
  }
  for (size_t e = 0; e < exits.size(); ++e)
    for (int c = 0; c < n_classes; ++c) {
      if (counts[e][c] == 0)
        throw std::runtime_error("class_mean_gap: class " + std::to_string(c) +
                                 " has no training samples");
      sums[e].col(c) /= static_cast<double>(counts[e][c]);
    }
  return sums;
}

// Ternary semantic centers: quantize each class-mean vector independently.
inline CenterBank compute_semantic_centers(const Dataset& train, const MappedNetwork& net,
                                           const PipelineOptions& opt) {
  auto means = class_mean_gap(train, net, opt);
  CenterBank bank;
  bank.n_classes = net.spec.n_classes;
  bank.ternary = true;
  bank.exit_blocks = net.spec.exit_blocks();
  for (auto& m : means) {
    const int dim = static_cast<int>(m.rows());
    TernaryTensor t({bank.n_classes, dim});
    MatrixXd exact(dim, bank.n_classes);
    for (int c = 0; c < bank.n_classes; ++c) {
      Tensor v({dim});
      for (int d = 0; d < dim; ++d) v.values[d] = m(d, c);
      TernaryTensor q = ternary_quantize(v);
      for (int d = 0; d < dim; ++d) {
        t.values[static_cast<long long>(c) * dim + d] = q.values[d];
        exact(d, c) = static_cast<double>(q.values[d]);
      }
    }
    bank.centers.push_back(std::move(t));
    bank.exact.push_back(std::move(exact));
  }
  return bank;
}

// Full-precision centers for the direct-mapping baseline.
inline CenterBank compute_fullprecision_centers(const Dataset& train, const MappedNetwork& net,
                                                const PipelineOptions& opt) {
  auto means = class_mean_gap(train, net, opt);
  CenterBank bank;
  bank.n_classes = net.spec.n_classes;
  bank.ternary = false;
  bank.exit_blocks = net.spec.exit_blocks();
  for (auto& m : means) bank.exact.push_back(m);
  return bank;
}

// Program the bank's contents onto CAM devices, freezing write noise.
inline CenterBank program_bank(const CenterBank& bank, const DeviceStats& stats, Rng& rng,
                               bool write_noise = true) {
  stats.validate();
  CenterBank out = bank;
  out.cams.clear();
  out.exact.clear();
  for (int e = 0; e < bank.n_exits(); ++e) {
    std::shared_ptr<Crossbar> xb;
    if (bank.ternary) {
      const int dim = static_cast<int>(bank.exact[e].rows());
      TernaryTensor t({dim, bank.n_classes});
      for (int d = 0; d < dim; ++d)
        for (int c = 0; c < bank.n_classes; ++c)
          t.values[static_cast<long long>(d) * bank.n_classes + c] =
              static_cast<std::int8_t>(bank.exact[e](d, c));
      xb = std::make_shared<Crossbar>(Crossbar::program(t, stats, rng, write_noise));
    } else {
      const double m = std::max(bank.exact[e].cwiseAbs().maxCoeff(), 1e-12);
      xb = std::make_shared<Crossbar>(
          Crossbar::program_linear(bank.exact[e] / m, stats, rng, write_noise));
      // cosine similarity is invariant to the per-exit normalization
    }
    out.exact.push_back(xb->effective());
    out.cams.push_back(std::move(xb));
  }
  return out;
}

// Noisy cosine-similarity search against the stored centers at one exit.
// Queries are quantized to the input DAC resolution before the search.
inline SearchResult search(const VectorXd& query, const CenterBank& bank, int exit,
                           const PipelineOptions& opt, Rng* read_rng = nullptr,
                           OpCounts* ops = nullptr) {
  if (exit < 0 || exit >= bank.n_exits()) throw std::invalid_argument("search: bad exit index");
  if (query.size() != bank.exact[exit].rows())
    throw std::invalid_argument("search: query dimension mismatch");
  Tensor q({static_cast<int>(query.size())},
           std::vector<double>(query.data(), query.data() + query.size()));
  quantize_activations(q, opt.input_bits);
  VectorXd qv = Eigen::Map<const VectorXd>(q.data(), q.size());
  const double qn = qv.norm();
  if (qn == 0.0) throw std::invalid_argument("search: all-zero query has undefined similarity");

  MatrixXd C = (opt.read_noise && read_rng && exit < static_cast<int>(bank.cams.size()) &&
                bank.cams[exit])
                   ? bank.cams[exit]->effective_read(*read_rng)
                   : bank.exact[exit];

  SearchResult r;
  r.similarities.resize(bank.n_classes);
  for (int c = 0; c < bank.n_classes; ++c) {
    const double cn = C.col(c).norm();
    if (cn == 0.0) {
      r.similarities[c] = 0.0;
      r.zero_center_seen = true;
      continue;
    }
    r.similarities[c] = qv.dot(C.col(c)) / (qn * cn);
  }
  r.argmax = 0;
  for (int c = 1; c < bank.n_classes; ++c)
    if (r.similarities[c] > r.similarities[r.argmax]) r.argmax = c;
  double top2 = -2.0;
  for (int c = 0; c < bank.n_classes; ++c)
    if (c != r.argmax) top2 = std::max(top2, r.similarities[c]);
  r.margin = r.similarities[r.argmax] - top2;

  if (ops) {
    ops->cam_compare += static_cast<long long>(bank.n_classes) * query.size();
    ops->cam_adc += bank.n_classes;
    ops->sort += bank.n_classes;
  }
  return r;
}

}  // namespace semdnn
