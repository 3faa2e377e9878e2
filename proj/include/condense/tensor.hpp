#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "condense/errors.hpp"

namespace condense {

// Dense row-major float32 tensor, rank <= 4. Image tensors are NCHW.
// A default-constructed Tensor is the empty sentinel (no storage); every
// other tensor satisfies data.size() == product(shape).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, float value);
  static Tensor scalar(float value) { return Tensor({}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool is_empty() const { return data_.empty(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }

  // Rank-4 accessor; callers guarantee the rank.
  float& at(int b, int c, int h, int w) {
    return data_[static_cast<size_t>(((static_cast<int64_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  float at(int b, int c, int h, int w) const {
    return data_[static_cast<size_t>(((static_cast<int64_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  void fill(float value);
  void add_(const Tensor& other);   // elementwise +=, shapes must match
  void scale_(float factor);
  bool all_finite() const;

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

int64_t shape_numel(const std::vector<int>& shape);

}  // namespace condense
