// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "autodiff/tensor.hpp"

namespace wiper {

struct SgdOptions {
  double learning_rate = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

/// Classic (heavy-ball) momentum SGD with weight decay folded into the gradient:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - learning_rate * v
template <std::floating_point T>
class Sgd {
 public:
  explicit Sgd(SgdOptions options);

  const SgdOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr);

  /// Every parameter must carry a gradient buffer. The parameter list must keep
  /// the same order and shapes across calls.
  void step(std::span<Tensor<T>* const> params);

  std::span<const std::vector<T>> velocity() const noexcept { return velocity_; }

 private:
  SgdOptions options_;
  std::vector<std::vector<T>> velocity_;
};

extern template class Sgd<float>;
extern template class Sgd<double>;

}  // namespace wiper
