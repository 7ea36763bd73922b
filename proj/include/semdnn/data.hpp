#pragma once
#include <stdexcept>
#include <vector>

#include "semdnn/tensor.hpp"

namespace semdnn {

// Labeled image dataset, pixels scaled to [0,1].
struct Dataset {
  int h = 28, w = 28;
  std::vector<std::vector<double>> images;  // flat h*w per sample
  std::vector<int> labels;

  size_t size() const { return images.size(); }

  Tensor image_tensor(size_t i) const {
    return Tensor({1, h, w}, images.at(i));
  }

  Dataset subset(size_t offset, size_t count) const {
    Dataset d;
    d.h = h;
    d.w = w;
    const size_t end = std::min(offset + count, size());
    for (size_t i = offset; i < end; ++i) {
      d.images.push_back(images[i]);
      d.labels.push_back(labels[i]);
    }
    return d;
  }

  void validate() const {
    if (images.size() != labels.size())
      throw std::runtime_error("Dataset: image/label count mismatch");
    for (auto& im : images)
      if (static_cast<int>(im.size()) != h * w)
        throw std::runtime_error("Dataset: bad image size");
  }
};

}  // namespace semdnn
