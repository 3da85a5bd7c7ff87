#include "fedlab/tensor.hpp"

#include <cmath>
#include <sstream>

#include "fedlab/errors.hpp"

namespace fedlab {

std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ConfigError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_size(shape) != static_cast<std::int64_t>(data.size()))
    throw ConfigError("tensor data size " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<int> shape) {
  auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<float>(static_cast<std::size_t>(n), 0.0f));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<float>(static_cast<std::size_t>(n), value));
}

bool Tensor::all_finite() const {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace fedlab
