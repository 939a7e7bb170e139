// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace wdgnas {

/// Per-sample shape (channels, height, width). Flat vectors are (F, 1, 1).
struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  bool spatial() const { return height > 1 || width > 1; }
  std::string to_string() const;
  bool operator==(const Shape&) const = default;
};

/// Dense NCHW batch in double precision.
struct Tensor {
  int batch = 0;
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int batch, Shape shape, double fill = 0.0)
      : batch(batch), shape(shape), data(static_cast<std::size_t>(batch) * shape.size(), fill) {}

  double* sample(int n) { return data.data() + static_cast<std::size_t>(n) * shape.size(); }
  const double* sample(int n) const { return data.data() + static_cast<std::size_t>(n) * shape.size(); }
  double& at(int n, int c, int h, int w) {
    return data[((static_cast<std::size_t>(n) * shape.channels + c) * shape.height + h) * shape.width + w];
  }
  double at(int n, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(n) * shape.channels + c) * shape.height + h) * shape.width + w];
  }
};

struct Batch {
  Tensor inputs;
  std::vector<int> labels;
};

}  // namespace wdgnas
