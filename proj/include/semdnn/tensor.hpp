#pragma once
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace semdnn {

inline long long shape_size(const std::vector<int>& shape) {
  long long n = 1;
  for (int d : shape) n *= d;
  return n;
}

// Dense real-valued array, flat row-major storage.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), values(shape_size(shape), 0.0) {}
  Tensor(std::vector<int> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (shape_size(shape) != static_cast<long long>(values.size()))
      throw std::invalid_argument("Tensor: shape/values size mismatch");
  }

  long long size() const { return static_cast<long long>(values.size()); }
  double* data() { return values.data(); }
  const double* data() const { return values.data(); }

  void check_finite(const char* what = "Tensor") const {
    for (double v : values)
      if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite value");
  }
};

// Array with every entry in {-1, 0, +1}.
struct TernaryTensor {
  std::vector<int> shape;
  std::vector<std::int8_t> values;

  TernaryTensor() = default;
  explicit TernaryTensor(std::vector<int> s) : shape(std::move(s)), values(shape_size(shape), 0) {}
  TernaryTensor(std::vector<int> s, std::vector<std::int8_t> v)
      : shape(std::move(s)), values(std::move(v)) {
    validate();
  }

  long long size() const { return static_cast<long long>(values.size()); }

  void validate() const {
    if (shape_size(shape) != static_cast<long long>(values.size()))
      throw std::invalid_argument("TernaryTensor: shape/values size mismatch");
    for (auto v : values)
      if (v < -1 || v > 1) throw std::invalid_argument("TernaryTensor: value outside {-1,0,1}");
  }
};

}  // namespace semdnn
