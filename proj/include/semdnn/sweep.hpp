#pragma once
#include <cmath>
#include <stdexcept>
#include <vector>

#include "semdnn/cam.hpp"
#include "semdnn/dynamic.hpp"
#include "semdnn/mapped.hpp"

namespace semdnn {

struct SweepRow {
  double sigma = 0;
  double ternary_mean = 0, ternary_std = 0;
  double fp_mean = 0, fp_std = 0;
  int n_seeds = 0;
};

struct SweepConfig {
  std::vector<double> sigma_grid;
  int n_seeds = 5;
  std::uint64_t base_seed = 1000;
  bool read_noise = false;  // write-only by default; true adds fresh read noise
};

// Write-noise robustness: remap both networks and their center banks at each
// sigma with fresh programming draws, then evaluate the dynamic pipeline.
// Ternary differential mapping vs direct (linear) full-precision mapping.
inline std::vector<SweepRow> noise_sweep(const QuantModel& quant, const Model& fp,
                                         const CenterBank& tern_bank,
                                         const CenterBank& fp_bank, const Dataset& data,
                                         const ExitPolicy& policy, const DeviceStats& stats,
                                         const PipelineOptions& base_opt,
                                         const SweepConfig& cfg) {
  if (cfg.sigma_grid.empty()) throw std::invalid_argument("noise_sweep: empty sigma grid");
  if (cfg.n_seeds < 1) throw std::invalid_argument("noise_sweep: need at least one seed");

  const OpsProfile profile = ops_profile(quant.spec, base_opt.tile);
  PipelineOptions opt = base_opt;
  opt.read_noise = cfg.read_noise;

  std::vector<SweepRow> rows;
  for (size_t si = 0; si < cfg.sigma_grid.size(); ++si) {
    SweepRow row;
    row.sigma = cfg.sigma_grid[si];
    if (row.sigma < 0) throw std::invalid_argument("noise_sweep: negative sigma");
    DeviceStats ds = stats;
    ds.sigma_write = row.sigma;
    std::vector<double> acc_t, acc_f;
    for (int s = 0; s < cfg.n_seeds; ++s) {
      const std::uint64_t seed = Rng::derive(cfg.base_seed, si * 1000 + s);
      {
        Rng rng(seed);
        MappedNetwork net = map_crossbar(quant, ds, rng, true);
        CenterBank bank = program_bank(tern_bank, ds, rng, true);
        auto table = build_similarity_table(data, net, bank, opt, seed ^ 0x9e3779b9ull);
        acc_t.push_back(evaluate_policy(table, profile, policy).accuracy);
      }
      {
        Rng rng(Rng::derive(seed, 7));
        MappedNetwork net = map_fullprecision(fp, &ds, &rng, true);
        CenterBank bank = program_bank(fp_bank, ds, rng, true);
        auto table = build_similarity_table(data, net, bank, opt, seed ^ 0x7f4a7c15ull);
        acc_f.push_back(evaluate_policy(table, profile, policy).accuracy);
      }
    }
    auto stats2 = [](const std::vector<double>& v, double& mean, double& sd) {
      mean = 0;
      for (double x : v) mean += x;
      mean /= v.size();
      double ss = 0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0;
    };
    stats2(acc_t, row.ternary_mean, row.ternary_std);
    stats2(acc_f, row.fp_mean, row.fp_std);
    row.n_seeds = cfg.n_seeds;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace semdnn
