#include "condense/tensor.hpp"

#include <cmath>
#include <sstream>

namespace condense {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  if (shape_.size() > 4) throw DimensionError("tensor rank > 4");
  for (int d : shape_) {
    if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str());
  }
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 4) throw DimensionError("tensor rank > 4");
  for (int d : shape_) {
    if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str());
  }
  if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
  }
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str());
  }
  return shape_[static_cast<size_t>(axis)];
}

void Tensor::fill(float value) {
  for (float& v : data_) v = value;
}

void Tensor::add_(const Tensor& other) {
  if (!same_shape(other)) {
    throw DimensionError("add_ shape mismatch: " + shape_str() + " vs " + other.shape_str());
  }
  const float* src = other.data();
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += src[i];
}

void Tensor::scale_(float factor) {
  for (float& v : data_) v *= factor;
}

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

}  // namespace condense
