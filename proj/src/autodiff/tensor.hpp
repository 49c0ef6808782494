// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace wiper {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array with an optional gradient buffer of the same shape.
template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    require(data_.size() == shape_size(shape_), ErrorCode::shape_mismatch,
            "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape_string(shape_));
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T item() const {
    require(data_.size() == 1, ErrorCode::shape_mismatch, "item() on non-scalar tensor " + shape_string(shape_));
    return data_[0];
  }

  bool has_grad() const noexcept { return grad_.has_value(); }
  std::span<T> grad() {
    require(grad_.has_value(), ErrorCode::bad_state, "tensor has no gradient buffer");
    return *grad_;
  }
  std::span<const T> grad() const {
    require(grad_.has_value(), ErrorCode::bad_state, "tensor has no gradient buffer");
    return *grad_;
  }
  /// Allocates a zeroed gradient buffer if none exists.
  void ensure_grad() {
    if (!grad_) grad_.emplace(data_.size(), T{0});
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), T{0});
  }
  void drop_grad() { grad_.reset(); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  /// Value equality (gradient buffers are not compared).
  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_;
  std::vector<T> data_;
  std::optional<std::vector<T>> grad_;
};

template <std::floating_point To, std::floating_point From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  std::vector<To> values(src.data().begin(), src.data().end());
  return Tensor<To>(src.shape(), std::move(values));
}

}  // namespace wiper
