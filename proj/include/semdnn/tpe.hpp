#pragma once
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "semdnn/rng.hpp"

namespace semdnn {
namespace tpe {

// Scalarized accuracy/budget objective: Acc * (DCB / B)^omega, maximized.
inline double objective_score(double accuracy, double dcb, double target_budget,
                              double omega) {
  if (target_budget <= 0) throw std::invalid_argument("objective_score: B <= 0");
  if (dcb <= 0.0) return 0.0;  // limit convention for omega > 0
  return accuracy * std::pow(dcb / target_budget, omega);
}

struct Observation {
  std::vector<double> x;  // threshold vector
  double accuracy = 0.0;
  double dcb = 0.0;
  double score = 0.0;
};

struct TPEConfig {
  double gamma = 0.2;
  int n_startup = 20;
  int n_candidates = 24;
  int n_iterations = 1000;
  double low = -1.0, high = 1.0;
  double target_budget = 0.50;
  double omega = 0.127;
  std::uint64_t seed = 0;
  // bandwidth rule: max(nearest-neighbor spacing, range/(n+1)) per dimension
  std::string bandwidth_rule = "nn-spacing";

  void validate() const {
    if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("TPEConfig: gamma out of (0,1)");
    if (n_startup < 2) throw std::invalid_argument("TPEConfig: n_startup < 2");
    if (!(low < high)) throw std::invalid_argument("TPEConfig: bad bounds");
  }
};

struct Split {
  std::vector<Observation> good, bad;
  double y_star = 0.0;  // score at the quantile boundary
};

// Top ceil(gamma*n) observations by score form the good set.
inline Split split_observations(const std::vector<Observation>& history, double gamma) {
  if (history.size() < 2) throw std::invalid_argument("split_observations: need >= 2 points");
  std::vector<Observation> sorted = history;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Observation& a, const Observation& b) { return a.score > b.score; });
  const size_t n_good = static_cast<size_t>(
      std::ceil(gamma * static_cast<double>(sorted.size())));
  Split s;
  s.good.assign(sorted.begin(), sorted.begin() + n_good);
  s.bad.assign(sorted.begin() + n_good, sorted.end());
  s.y_star = s.good.back().score;
  return s;
}

// Per-dimension Parzen window with Gaussian components, uniform mixture
// weights, and per-center bandwidths. Components can optionally be truncated
// and renormalized onto [low, high].
class ParzenEstimator {
 public:
  ParzenEstimator(const std::vector<std::vector<double>>& points, double low, double high,
                  bool truncated)
      : low_(low), high_(high), truncated_(truncated) {
    if (points.empty()) throw std::invalid_argument("ParzenEstimator: no centers");
    dims_ = points[0].size();
    centers_ = points;
    bandwidths_.assign(points.size(), std::vector<double>(dims_, 0.0));
    const double floor_bw = (high - low) / (static_cast<double>(points.size()) + 1.0);
    for (size_t d = 0; d < dims_; ++d) {
      for (size_t i = 0; i < points.size(); ++i) {
        double nearest = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < points.size(); ++j)
          if (j != i) nearest = std::min(nearest, std::abs(points[i][d] - points[j][d]));
        if (!std::isfinite(nearest)) nearest = 0.0;
        bandwidths_[i][d] = std::max(nearest, floor_bw);
      }
    }
  }

  size_t dims() const { return dims_; }
  size_t n_centers() const { return centers_.size(); }

  // product over dimensions of the per-dimension mixture density
  double pdf(const std::vector<double>& x) const {
    if (x.size() != dims_) throw std::invalid_argument("ParzenEstimator::pdf: bad dimension");
    double p = 1.0;
    for (size_t d = 0; d < dims_; ++d) p *= pdf_dim(x[d], d);
    return p;
  }

  double pdf_dim(double x, size_t d) const {
    double sum = 0.0;
    for (size_t i = 0; i < centers_.size(); ++i)
      sum += component_pdf(x, centers_[i][d], bandwidths_[i][d]);
    return sum / static_cast<double>(centers_.size());
  }

  // draw one point: pick a component uniformly, sample per dimension
  std::vector<double> sample(Rng& rng) const {
    const size_t i = static_cast<size_t>(rng.below(centers_.size()));
    std::vector<double> x(dims_);
    for (size_t d = 0; d < dims_; ++d) {
      double v;
      do {
        v = rng.gaussian(centers_[i][d], bandwidths_[i][d]);
      } while (truncated_ && (v < low_ || v > high_));
      x[d] = truncated_ ? v : std::clamp(v, low_, high_);
    }
    return x;
  }

 private:
  static double norm_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730951); }

  double component_pdf(double x, double mu, double sigma) const {
    if (sigma <= 0) throw std::invalid_argument("ParzenEstimator: sigma <= 0");
    const double z = (x - mu) / sigma;
    double p = std::exp(-0.5 * z * z) / (2.5066282746310002 * sigma);
    if (truncated_) {
      const double mass = norm_cdf((high_ - mu) / sigma) - norm_cdf((low_ - mu) / sigma);
      p = (x < low_ || x > high_) ? 0.0 : p / mass;
    }
    return p;
  }

  std::vector<std::vector<double>> centers_;
  std::vector<std::vector<double>> bandwidths_;
  size_t dims_ = 0;
  double low_, high_;
  bool truncated_;
};

// Expected-improvement surrogate: (gamma + (g/l)(1-gamma))^-1, increasing in l/g.
inline double acquisition_ratio(const std::vector<double>& x, const ParzenEstimator& l_est,
                                const ParzenEstimator& g_est, double gamma) {
  const double l = l_est.pdf(x);
  const double g = g_est.pdf(x);
  return 1.0 / (gamma + (g / l) * (1.0 - gamma));
}

inline std::vector<double> random_point(size_t dims, const TPEConfig& cfg, Rng& rng) {
  std::vector<double> x(dims);
  for (auto& v : x) v = rng.uniform(cfg.low, cfg.high);
  return x;
}

// Next candidate: draw from l(x), keep the acquisition maximizer.
inline std::vector<double> suggest(const std::vector<Observation>& history, size_t dims,
                                   const TPEConfig& cfg, Rng& rng) {
  if (static_cast<int>(history.size()) < cfg.n_startup)
    return random_point(dims, cfg, rng);
  const Split s = split_observations(history, cfg.gamma);
  auto pts = [](const std::vector<Observation>& obs) {
    std::vector<std::vector<double>> p;
    for (auto& o : obs) p.push_back(o.x);
    return p;
  };
  const ParzenEstimator l_est(pts(s.good), cfg.low, cfg.high, true);
  const ParzenEstimator g_est(pts(s.bad), cfg.low, cfg.high, true);
  std::vector<double> best;
  double best_acq = -1.0;
  for (int c = 0; c < cfg.n_candidates; ++c) {
    std::vector<double> x = l_est.sample(rng);
    const double a = acquisition_ratio(x, l_est, g_est, cfg.gamma);
    if (a > best_acq) {
      best_acq = a;
      best = std::move(x);
    }
  }
  return best;
}

struct OptimizeResult {
  Observation best;
  std::vector<Observation> history;
};

// evaluator: threshold vector -> (accuracy, dcb)
using Evaluator = std::function<std::pair<double, double>(const std::vector<double>&)>;

inline OptimizeResult optimize(const Evaluator& evaluate, size_t dims, const TPEConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  OptimizeResult res;
  res.best.score = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.n_iterations; ++it) {
    Observation o;
    o.x = suggest(res.history, dims, cfg, rng);
    try {
      auto [acc, dcb] = evaluate(o.x);
      o.accuracy = acc;
      o.dcb = dcb;
    } catch (const std::exception& e) {
      throw std::runtime_error("tpe::optimize: evaluator failed at iteration " +
                               std::to_string(it) + ": " + e.what());
    }
    o.score = objective_score(o.accuracy, o.dcb, cfg.target_budget, cfg.omega);
    if (o.score > res.best.score) res.best = o;
    res.history.push_back(std::move(o));
  }
  return res;
}

// Pure random-search baseline with the same budget.
inline OptimizeResult random_search(const Evaluator& evaluate, size_t dims,
                                    const TPEConfig& cfg) {
  Rng rng(cfg.seed);
  OptimizeResult res;
  res.best.score = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.n_iterations; ++it) {
    Observation o;
    o.x = random_point(dims, cfg, rng);
    auto [acc, dcb] = evaluate(o.x);
    o.accuracy = acc;
    o.dcb = dcb;
    o.score = objective_score(o.accuracy, o.dcb, cfg.target_budget, cfg.omega);
    if (o.score > res.best.score) res.best = o;
    res.history.push_back(std::move(o));
  }
  return res;
}

struct GridRow {
  double theta;
  double accuracy;
  double dcb;
};

// Shared-scalar-threshold sweep for the accuracy/budget frontier.
inline std::vector<GridRow> grid_search(const Evaluator& evaluate, double low, double high,
                                        int points, size_t dims) {
  if (points < 1) throw std::invalid_argument("grid_search: empty grid");
  std::vector<GridRow> rows;
  for (int i = 0; i < points; ++i) {
    const double theta = points == 1 ? low : low + (high - low) * i / (points - 1);
    auto [acc, dcb] = evaluate(std::vector<double>(dims, theta));
    rows.push_back({theta, acc, dcb});
  }
  return rows;
}

}  // namespace tpe
}  // namespace semdnn
