#pragma once
#include <Eigen/Dense>

#include "semdnn/device.hpp"
#include "semdnn/tensor.hpp"

namespace semdnn {

// Differential-pair memristor array: two conductance matrices encode one
// signed weight per cell. Contents are immutable after programming; write
// noise is frozen at program time, read noise is drawn per read.
class Crossbar {
 public:
  Crossbar() = default;

  // Ternary programming rule: +1 -> (on, off), -1 -> (off, on), 0 -> (off, off).
  // wq is rows x cols, rows = inputs.
  static Crossbar program(const TernaryTensor& wq, const DeviceStats& stats, Rng& rng,
                          bool write_noise = true) {
    if (wq.shape.size() != 2) throw std::invalid_argument("Crossbar::program: need 2-D weights");
    wq.validate();
    const int rows = wq.shape[0], cols = wq.shape[1];
    Crossbar xb;
    xb.stats_ = stats;
    xb.g_pos_.resize(rows, cols);
    xb.g_neg_.resize(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const int v = wq.values[static_cast<long long>(i) * cols + j];
        const double tp = v > 0 ? stats.g_on : stats.g_off;
        const double tn = v < 0 ? stats.g_on : stats.g_off;
        xb.g_pos_(i, j) = write_noise ? sample_programmed(tp, stats, rng) : tp;
        xb.g_neg_(i, j) = write_noise ? sample_programmed(tn, stats, rng) : tn;
      }
    }
    return xb;
  }

  // Multi-level programming for the full-precision direct-mapping baseline:
  // w normalized to [-1,1] lands on g_off + |w|*(g_on - g_off) on the matching
  // polarity device, g_off on the other one.
  static Crossbar program_linear(const Eigen::MatrixXd& w_norm, const DeviceStats& stats,
                                 Rng& rng, bool write_noise = true) {
    Crossbar xb;
    xb.stats_ = stats;
    const auto rows = w_norm.rows(), cols = w_norm.cols();
    xb.g_pos_.resize(rows, cols);
    xb.g_neg_.resize(rows, cols);
    const double span = stats.g_on - stats.g_off;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        const double v = std::clamp(w_norm(i, j), -1.0, 1.0);
        const double tp = stats.g_off + (v > 0 ? v * span : 0.0);
        const double tn = stats.g_off + (v < 0 ? -v * span : 0.0);
        xb.g_pos_(i, j) = write_noise ? sample_programmed(tp, stats, rng) : tp;
        xb.g_neg_(i, j) = write_noise ? sample_programmed(tn, stats, rng) : tn;
      }
    }
    return xb;
  }

  Eigen::Index rows() const { return g_pos_.rows(); }
  Eigen::Index cols() const { return g_pos_.cols(); }
  const DeviceStats& stats() const { return stats_; }
  const Eigen::MatrixXd& g_pos() const { return g_pos_; }
  const Eigen::MatrixXd& g_neg() const { return g_neg_; }

  // Effective weights from the frozen programmed state.
  Eigen::MatrixXd effective() const {
    return (g_pos_ - g_neg_) / (stats_.g_on - stats_.g_off);
  }

  // Effective weights under one fresh read-noise realization.
  Eigen::MatrixXd effective_read(Rng& rng) const {
    Eigen::MatrixXd e(g_pos_.rows(), g_pos_.cols());
    for (Eigen::Index j = 0; j < g_pos_.cols(); ++j)
      for (Eigen::Index i = 0; i < g_pos_.rows(); ++i)
        e(i, j) = sample_read(g_pos_(i, j), stats_, rng) - sample_read(g_neg_(i, j), stats_, rng);
    return e / (stats_.g_on - stats_.g_off);
  }

  // out_j = sum_i x_i * (G_pos[i,j] - G_neg[i,j]) / (g_on - g_off).
  // Pass a rng to draw read noise; null reads the frozen programmed state.
  Eigen::VectorXd mvm(const Eigen::VectorXd& x, Rng* read_rng = nullptr) const {
    if (x.size() != rows()) throw std::invalid_argument("Crossbar::mvm: dimension mismatch");
    if (read_rng) return effective_read(*read_rng).transpose() * x;
    return effective().transpose() * x;
  }

  void swap_polarity() { g_pos_.swap(g_neg_); }

 private:
  Eigen::MatrixXd g_pos_, g_neg_;
  DeviceStats stats_;
};

}  // namespace semdnn
