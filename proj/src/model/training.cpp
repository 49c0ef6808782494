// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "model/training.hpp"

#include <algorithm>
#include <numeric>

namespace wiper {

template <std::floating_point T>
Batch<T> make_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t h = ds.height, w = ds.width, c = ds.channels;
  Batch<T> batch;
  batch.inputs = Tensor<T>({indices.size(), c, h, w});
  batch.labels.reserve(indices.size());
  batch.indices.assign(indices.begin(), indices.end());
  auto out = batch.inputs.data();
  const T inv = T{1} / T{255};
  for (std::size_t n = 0; n < indices.size(); ++n) {
    require(indices[n] < ds.size(), ErrorCode::invalid_argument, "make_batch: index out of range");
    const auto img = ds.image(indices[n]);
    // NHWC u8 -> NCHW real
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < h * w; ++p) out[((n * c) + ch) * h * w + p] = static_cast<T>(img[p * c + ch]) * inv;
    batch.labels.push_back(ds.labels[indices[n]]);
  }
  return batch;
}

template <std::floating_point T>
Batch<T> make_batch(const Dataset& ds) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_batch<T>(ds, all);
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  require(batch_size > 0, ErrorCode::invalid_argument, "batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

template <std::floating_point T>
void fit(Model<T>& model, const Dataset& data, const TrainRecipe& recipe, std::uint64_t seed,
         const LossHook<T>& loss, const StepHook<T>& after_step) {
  if (recipe.epochs == 0) return;
  require(data.size() > 0, ErrorCode::invalid_argument, "fit: empty dataset");
  Sgd<T> opt(recipe.sgd);
  Rng rng(seed);
  auto params = model.param_ptrs();
  for (std::size_t epoch = 0; epoch < recipe.epochs; ++epoch) {
    for (const auto& idx : shuffled_batches(data.size(), recipe.batch_size, rng)) {
      const Batch<T> batch = make_batch<T>(data, idx);
      model.zero_grad();
      Graph<T> g;
      const auto trace = model.forward_tracked(g, g.constant_ref(batch.inputs));
      const Var objective = loss ? loss(g, trace, batch) : g.cross_entropy(trace.logits, batch.labels);
      g.backward(objective);
      opt.step(params);
      if (after_step) after_step(model);
    }
  }
}

template <std::floating_point T>
std::vector<std::size_t> predict(const Model<T>& model, const Dataset& data, std::size_t chunk) {
  std::vector<std::size_t> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + chunk); ++i) idx.push_back(i);
    const Batch<T> batch = make_batch<T>(data, idx);
    const Tensor<T> logits = predict_logits(model, batch.inputs);
    const std::size_t classes = logits.extent(1);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      const T* row = logits.data().data() + n * classes;
      out.push_back(static_cast<std::size_t>(std::max_element(row, row + classes) - row));
    }
  }
  return out;
}

#define WIPER_INSTANTIATE(T)                                                                             \
  template Batch<T> make_batch<T>(const Dataset&, std::span<const std::size_t>);                        \
  template Batch<T> make_batch<T>(const Dataset&);                                                       \
  template void fit<T>(Model<T>&, const Dataset&, const TrainRecipe&, std::uint64_t, const LossHook<T>&, \
                       const StepHook<T>&);                                                              \
  template std::vector<std::size_t> predict<T>(const Model<T>&, const Dataset&, std::size_t);

WIPER_INSTANTIATE(float)
WIPER_INSTANTIATE(double)
#undef WIPER_INSTANTIATE

}  // namespace wiper
