#pragma once
#include <array>
#include <cmath>

#include "semdnn/data.hpp"
#include "semdnn/rng.hpp"

namespace semdnn {

// Procedural handwritten-digit generator. Digits are stroke skeletons in a
// unit box, perturbed per sample by a random affine transform, stroke
// thickness, control-point jitter and pixel noise, then rasterized to
// 28x28 grayscale. Fully deterministic given the seed; written to standard
// IDX files it serves as an offline stand-in when the real MNIST files are
// not available.
namespace synth {

using Point = std::array<double, 2>;  // (x, y), y grows downward
using Stroke = std::vector<Point>;

inline Stroke arc(double cx, double cy, double rx, double ry, double a0, double a1,
                  int n = 24) {
  Stroke s;
  for (int i = 0; i <= n; ++i) {
    const double a = a0 + (a1 - a0) * i / n;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

inline Stroke line(Point a, Point b, int n = 12) {
  Stroke s;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    s.push_back({a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t});
  }
  return s;
}

constexpr double kPi = 3.141592653589793;

inline std::vector<Stroke> glyph(int digit, int style) {
  std::vector<Stroke> g;
  switch (digit) {
    case 0:
      g.push_back(arc(0.5, 0.5, 0.26, 0.36, 0, 2 * kPi, 40));
      break;
    case 1:
      g.push_back(line({0.52, 0.12}, {0.52, 0.88}));
      if (style % 2) g.push_back(line({0.38, 0.26}, {0.52, 0.12}, 6));
      if (style % 3 == 0) g.push_back(line({0.36, 0.88}, {0.68, 0.88}, 6));
      break;
    case 2:
      g.push_back(arc(0.5, 0.34, 0.24, 0.22, -kPi, 0.35 * kPi, 24));
      g.push_back(line({0.668, 0.53}, {0.27, 0.85}));
      g.push_back(line({0.27, 0.85}, {0.75, 0.85}, 8));
      break;
    case 3:
      g.push_back(arc(0.47, 0.32, 0.22, 0.20, -0.75 * kPi, 0.5 * kPi, 22));
      g.push_back(arc(0.47, 0.70, 0.25, 0.22, -0.5 * kPi, 0.75 * kPi, 22));
      break;
    case 4:
      g.push_back(line({0.60, 0.12}, {0.24, 0.60}));
      g.push_back(line({0.24, 0.60}, {0.80, 0.60}, 10));
      g.push_back(line({0.63, 0.34}, {0.63, 0.88}));
      break;
    case 5:
      g.push_back(line({0.72, 0.14}, {0.32, 0.14}, 8));
      g.push_back(line({0.32, 0.14}, {0.30, 0.45}, 6));
      g.push_back(arc(0.47, 0.64, 0.24, 0.22, -0.55 * kPi, 0.85 * kPi, 26));
      break;
    case 6:
      g.push_back(arc(0.52, 0.40, 0.34, 0.47, -0.55 * kPi, -1.25 * kPi, 18));
      g.push_back(arc(0.48, 0.66, 0.21, 0.20, 0, 2 * kPi, 30));
      break;
    case 7:
      g.push_back(line({0.26, 0.15}, {0.76, 0.15}, 8));
      g.push_back(line({0.76, 0.15}, {0.42, 0.88}));
      if (style % 2) g.push_back(line({0.36, 0.50}, {0.66, 0.50}, 6));
      break;
    case 8:
      g.push_back(arc(0.5, 0.31, 0.19, 0.17, 0, 2 * kPi, 28));
      g.push_back(arc(0.5, 0.68, 0.23, 0.21, 0, 2 * kPi, 30));
      break;
    case 9:
      g.push_back(arc(0.50, 0.33, 0.20, 0.19, 0, 2 * kPi, 28));
      g.push_back(line({0.70, 0.36}, {0.60, 0.88}));
      break;
    default:
      throw std::invalid_argument("glyph: digit out of range");
  }
  return g;
}

inline double segment_distance(const Point& p, const Point& a, const Point& b) {
  const double vx = b[0] - a[0], vy = b[1] - a[1];
  const double wx = p[0] - a[0], wy = p[1] - a[1];
  const double vv = vx * vx + vy * vy;
  const double t = vv > 0 ? std::clamp((wx * vx + wy * vy) / vv, 0.0, 1.0) : 0.0;
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

inline std::vector<double> render_digit(int digit, Rng& rng, int hw = 28) {
  const int style = static_cast<int>(rng.below(6));
  std::vector<Stroke> strokes = glyph(digit, style);

  // random affine about the box center + per-point jitter
  const double rot = rng.gaussian(0.0, 0.13);
  const double shear = rng.gaussian(0.0, 0.12);
  const double sx = rng.uniform(0.78, 1.06), sy = rng.uniform(0.78, 1.06);
  const double tx = rng.uniform(-0.06, 0.06), ty = rng.uniform(-0.06, 0.06);
  const double cr = std::cos(rot), sr = std::sin(rot);
  const double jitter = rng.uniform(0.004, 0.018);
  for (auto& s : strokes)
    for (auto& p : s) {
      double x = (p[0] - 0.5) * sx, y = (p[1] - 0.5) * sy;
      x += shear * y;
      const double xr = cr * x - sr * y, yr = sr * x + cr * y;
      p[0] = 0.5 + xr + tx + rng.gaussian(0.0, jitter);
      p[1] = 0.5 + yr + ty + rng.gaussian(0.0, jitter);
    }

  const double margin = 3.0;
  const double span = hw - 2.0 * margin;
  const double thickness = rng.uniform(0.85, 1.9);  // pixels
  const double aa = 0.8;

  std::vector<double> img(static_cast<size_t>(hw) * hw, 0.0);
  for (int iy = 0; iy < hw; ++iy) {
    for (int ix = 0; ix < hw; ++ix) {
      const Point p = {(ix - margin) / span, (iy - margin) / span};
      double d = 1e9;
      for (const auto& s : strokes)
        for (size_t i = 0; i + 1 < s.size(); ++i)
          d = std::min(d, segment_distance(p, s[i], s[i + 1]));
      const double dp = d * span;  // distance in pixels
      double v = std::clamp((thickness - dp) / aa + 0.5, 0.0, 1.0);
      img[static_cast<size_t>(iy) * hw + ix] = v;
    }
  }
  // pixel noise
  for (auto& v : img) {
    v = v * rng.uniform(0.85, 1.0) + rng.gaussian(0.0, 0.02);
    v = std::clamp(v, 0.0, 1.0);
  }
  return img;
}

}  // namespace synth

// Balanced synthetic digit dataset.
inline Dataset synth_digits(size_t n, std::uint64_t seed) {
  Dataset d;
  Rng rng(seed ^ 0x7f4a7c159e3779b9ull);
  for (size_t i = 0; i < n; ++i) {
    const int digit = static_cast<int>(rng.below(10));
    d.images.push_back(synth::render_digit(digit, rng));
    d.labels.push_back(digit);
  }
  return d;
}

}  // namespace semdnn
