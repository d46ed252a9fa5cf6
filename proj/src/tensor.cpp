#include "safedom/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace safedom {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw std::invalid_argument("tensor: zero-sized dimension");
  }
  values_.assign(shape_product(shape_), 0.0f);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw std::invalid_argument("tensor: zero-sized dimension");
  }
  if (shape_product(shape_) != values_.size()) {
    std::ostringstream msg;
    msg << "tensor: shape " << shape_str() << " expects "
        << shape_product(shape_) << " values, got " << values_.size();
    throw std::invalid_argument(msg.str());
  }
}

Tensor Tensor::scalar(float v) { return Tensor({1}, {v}); }

Tensor Tensor::from_vector(std::vector<float> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape_); }

bool Tensor::all_finite() const {
  for (float v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  if (shape_product(new_shape) != values_.size()) {
    throw std::invalid_argument("tensor: reshape changes element count");
  }
  return Tensor(std::move(new_shape), values_);
}

std::string Tensor::shape_str() const {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out << ", ";
    out << shape_[i];
  }
  out << "]";
  return out.str();
}

void require_finite(const Tensor& t, const char* context) {
  if (!t.all_finite()) {
    throw std::invalid_argument(std::string(context) +
                                ": non-finite value in tensor");
  }
}

}  // namespace safedom
