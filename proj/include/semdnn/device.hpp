#pragma once
#include <stdexcept>
#include <utility>
#include <vector>

#include "semdnn/rng.hpp"

namespace semdnn {

// Memristor device statistics. Conductances in microsiemens.
//
// g_on/g_off defaults are assumptions: the source measurements give the
// noise statistics but not the absolute conductance scale. Write noise is
// relative (~15% of the programmed target); read noise std grows linearly
// with mean conductance, sigma_read(G) = read_a * G + read_b.
struct DeviceStats {
  double g_on = 150.0;
  double g_off = 10.0;
  double sigma_write = 0.15;
  double read_a = 0.03;
  double read_b = 0.5;

  void validate() const {
    if (!(g_on > g_off) || g_off < 0)
      throw std::invalid_argument("DeviceStats: require g_on > g_off >= 0");
    if (sigma_write < 0) throw std::invalid_argument("DeviceStats: sigma_write < 0");
    if (sigma_read(g_off) < 0 || sigma_read(g_on) < 0)
      throw std::invalid_argument("DeviceStats: sigma_read negative on [g_off, g_on]");
  }

  double sigma_read(double g) const { return read_a * g + read_b; }
};

struct NoiseConfig {
  bool write_enabled = true;
  bool read_enabled = true;
  std::uint64_t seed = 0;
};

// One-time programming draw; the result is frozen for the life of the device.
inline double sample_programmed(double g_target, const DeviceStats& stats, Rng& rng) {
  if (g_target < 0) throw std::invalid_argument("sample_programmed: negative target");
  const double g = g_target * (1.0 + stats.sigma_write * rng.gaussian());
  return g > 0.0 ? g : 0.0;
}

// Fresh draw per read; std follows the linear mean-std correlation.
inline double sample_read(double g_prog, const DeviceStats& stats, Rng& rng) {
  const double g = g_prog + stats.sigma_read(g_prog) * rng.gaussian();
  return g > 0.0 ? g : 0.0;
}

// Least-squares fit of read std against mean conductance.
inline std::pair<double, double> fit_read_model(
    const std::vector<std::pair<double, double>>& mean_std) {
  if (mean_std.size() < 2) throw std::invalid_argument("fit_read_model: need >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(mean_std.size());
  for (auto& [x, y] : mean_std) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (denom <= 0) throw std::runtime_error("fit_read_model: degenerate fit (all means equal)");
  const double a = (n * sxy - sx * sy) / denom;
  const double b = (sy - a * sx) / n;
  return {a, b};
}

}  // namespace semdnn
