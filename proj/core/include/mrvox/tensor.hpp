// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mrvox/error.hpp"

namespace mrvox {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * std::size_t(d); });
}

std::string shape_string(const Shape& shape);

/// Dense row-major array, last axis fastest.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {
    check_dims();
  }
  BasicTensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_dims();
    if (values_.size() != shape_size(shape_)) {
      throw ShapeError("tensor of shape " + shape_string(shape_) + " given " + std::to_string(values_.size()) +
                       " values");
    }
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int dim(int axis) const { return shape_[std::size_t(axis)]; }
  std::size_t size() const { return values_.size(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  /// Same values, new shape of equal size.
  void reshape(Shape shape) {
    if (shape_size(shape) != values_.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  void fill(T value) { std::fill(values_.begin(), values_.end(), value); }

  template <class U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  void check_dims() const {
    for (int d : shape_) {
      if (d < 0) throw ShapeError("negative tensor dimension in " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> values_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace mrvox
