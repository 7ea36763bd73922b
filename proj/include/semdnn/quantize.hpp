#pragma once
#include <algorithm>
#include <limits>
#include <span>

#include "semdnn/tensor.hpp"

namespace semdnn {

// Thirds-of-range thresholds computed over one quantization group
// (a whole residual block in the default model).
struct TernaryThresholds {
  double lo;  // values strictly below map to -1
  double hi;  // values strictly above map to +1
};

inline TernaryThresholds ternary_thresholds(std::span<const double> w) {
  if (w.empty()) throw std::invalid_argument("ternary_thresholds: empty input");
  double wmin = std::numeric_limits<double>::infinity();
  double wmax = -std::numeric_limits<double>::infinity();
  for (double v : w) {
    if (!std::isfinite(v)) throw std::invalid_argument("ternary_thresholds: non-finite value");
    wmin = std::min(wmin, v);
    wmax = std::max(wmax, v);
  }
  const double third = (wmax - wmin) / 3.0;
  return {wmin + third, wmax - third};
}

inline std::int8_t ternary_apply(double w, const TernaryThresholds& t) {
  if (w < t.lo) return -1;
  if (w > t.hi) return 1;
  return 0;  // lo <= w <= hi, ties inclusive on both sides
}

inline TernaryTensor ternary_quantize(const Tensor& w) {
  if (w.values.empty()) throw std::invalid_argument("ternary_quantize: empty tensor");
  const TernaryThresholds t = ternary_thresholds(w.values);
  TernaryTensor out(w.shape);
  for (size_t i = 0; i < w.values.size(); ++i) out.values[i] = ternary_apply(w.values[i], t);
  return out;
}

// Group quantization: thresholds from the concatenation of several tensors,
// applied to each member.
inline TernaryThresholds ternary_thresholds_group(std::span<const Tensor* const> group) {
  double wmin = std::numeric_limits<double>::infinity();
  double wmax = -std::numeric_limits<double>::infinity();
  long long n = 0;
  for (const Tensor* t : group) {
    for (double v : t->values) {
      if (!std::isfinite(v)) throw std::invalid_argument("ternary group: non-finite value");
      wmin = std::min(wmin, v);
      wmax = std::max(wmax, v);
    }
    n += t->size();
  }
  if (n == 0) throw std::invalid_argument("ternary group: empty");
  const double third = (wmax - wmin) / 3.0;
  return {wmin + third, wmax - third};
}

inline TernaryTensor ternary_apply_tensor(const Tensor& w, const TernaryThresholds& t) {
  TernaryTensor out(w.shape);
  for (size_t i = 0; i < w.values.size(); ++i) out.values[i] = ternary_apply(w.values[i], t);
  return out;
}

}  // namespace semdnn
