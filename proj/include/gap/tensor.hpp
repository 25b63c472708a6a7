#pragma once

#include <cstddef>
#include <vector>

namespace gap {

// Dense row-major tensor of 64-bit reals.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_in, double fill = 0.0);

  std::size_t numel() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double &at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor &other) const { return shape == other.shape; }
};

// Throws ShapeError when product(shape) != data length.
void check_shape_consistent(const Tensor &t, const char *what);

// Throws NumericError on any NaN/Inf entry.
void check_finite(const Tensor &t, const char *what);
void check_finite(const std::vector<double> &v, const char *what);

} // namespace gap
