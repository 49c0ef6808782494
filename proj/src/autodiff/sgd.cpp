// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "autodiff/sgd.hpp"

#include <cmath>
#include <string>

namespace wiper {

namespace {

void validate(const SgdOptions& o) {
  require(o.learning_rate > 0.0 && std::isfinite(o.learning_rate), ErrorCode::invalid_argument,
          "sgd: learning rate must be positive");
  require(o.momentum >= 0.0 && o.momentum < 1.0, ErrorCode::invalid_argument, "sgd: momentum must lie in [0,1)");
  require(o.weight_decay >= 0.0, ErrorCode::invalid_argument, "sgd: weight decay must be nonnegative");
}

}  // namespace

template <std::floating_point T>
Sgd<T>::Sgd(SgdOptions options) : options_(options) {
  validate(options_);
}

template <std::floating_point T>
void Sgd<T>::set_learning_rate(double lr) {
  SgdOptions next = options_;
  next.learning_rate = lr;
  validate(next);
  options_ = next;
}

template <std::floating_point T>
void Sgd<T>::step(std::span<Tensor<T>* const> params) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const Tensor<T>* p : params) velocity_.emplace_back(p->size(), T{0});
  }
  require(velocity_.size() == params.size(), ErrorCode::bad_state, "sgd: parameter list changed between steps");

  const T lr = static_cast<T>(options_.learning_rate);
  const T mu = static_cast<T>(options_.momentum);
  const T wd = static_cast<T>(options_.weight_decay);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    require(p.has_grad(), ErrorCode::bad_state, "sgd: parameter " + std::to_string(k) + " has no gradient");
    auto& v = velocity_[k];
    require(v.size() == p.size(), ErrorCode::shape_mismatch, "sgd: velocity shape does not match parameter");
    auto data = p.data();
    auto grad = p.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      v[i] = mu * v[i] + grad[i] + wd * data[i];
      data[i] -= lr * v[i];
    }
    require(p.all_finite(), ErrorCode::non_finite, "sgd: parameter became non-finite");
  }
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace wiper
