// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "autodiff/sgd.hpp"
#include "core/rng.hpp"
#include "model/model.hpp"
#include "poison/dataset.hpp"

namespace wiper {

/// Inputs as [B, C, H, W] scaled to [0, 1], plus labels.
template <std::floating_point T>
struct Batch {
  Tensor<T> inputs;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> indices;  // positions in the source dataset
};

template <std::floating_point T>
Batch<T> make_batch(const Dataset& ds, std::span<const std::size_t> indices);

template <std::floating_point T>
Batch<T> make_batch(const Dataset& ds);

/// Shuffled partition of [0, n) into batches of `batch_size` (last one may be short).
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng);

struct TrainRecipe {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  SgdOptions sgd{};
};

template <std::floating_point T>
using LossHook = std::function<Var(Graph<T>&, const typename Model<T>::Trace&, const Batch<T>&)>;

template <std::floating_point T>
using StepHook = std::function<void(Model<T>&)>;

/// Mini-batch SGD over `data`. The default loss is cross-entropy; `after_step`
/// runs after every optimizer update.
template <std::floating_point T>
void fit(Model<T>& model, const Dataset& data, const TrainRecipe& recipe, std::uint64_t seed,
         const LossHook<T>& loss = {}, const StepHook<T>& after_step = {});

template <std::floating_point T>
std::vector<std::size_t> predict(const Model<T>& model, const Dataset& data, std::size_t chunk = 256);

}  // namespace wiper
