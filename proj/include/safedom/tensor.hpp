#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace safedom {

// Dense row-major float32 tensor. The shape is fixed at construction;
// values are mutable through data(). Reductions elsewhere accumulate in
// double to keep dot-product error bounded.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<float> values);

  static Tensor scalar(float v);
  static Tensor from_vector(std::vector<float> values);
  static Tensor zeros_like(const Tensor& t);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  bool empty() const { return values_.empty(); }

  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  float operator[](std::size_t i) const { return values_[i]; }
  float& operator[](std::size_t i) { return values_[i]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  // Same storage re-labelled with a compatible shape.
  Tensor reshaped(std::vector<std::size_t> new_shape) const;

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> values_;
};

std::size_t shape_product(std::span<const std::size_t> shape);

// Throws std::invalid_argument mentioning `context` if any value is NaN/Inf.
void require_finite(const Tensor& t, const char* context);

}  // namespace safedom
