#include "gap/tensor.hpp"

#include <cmath>
#include <string>

#include "gap/error.hpp"

namespace gap {

Tensor::Tensor(std::vector<std::size_t> shape_in, double fill)
    : shape(std::move(shape_in)) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  data.assign(n, fill);
}

void check_shape_consistent(const Tensor &t, const char *what) {
  std::size_t n = 1;
  for (std::size_t d : t.shape) {
    if (d == 0) throw ShapeError(std::string(what) + ": zero dimension");
    n *= d;
  }
  if (n != t.data.size())
    throw ShapeError(std::string(what) + ": shape/data length mismatch");
}

void check_finite(const Tensor &t, const char *what) {
  check_finite(t.data, what);
}

void check_finite(const std::vector<double> &v, const char *what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string(what) + ": non-finite value");
}

} // namespace gap
