// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

// Helpers shared by the unit suites and the acceptance runner.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "autodiff/graph.hpp"
#include "core/rng.hpp"
#include "harness/experiment.hpp"
#include "importance/importance.hpp"
#include "model/model.hpp"
#include "model/training.hpp"
#include "poison/attacks.hpp"

namespace wiper::testing {

/// Normal entries; when `min_abs` > 0, entries closer than that to any kink are redrawn.
inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0, double min_abs = 0.0,
                                    std::vector<double> kinks = {0.0}) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) {
    for (;;) {
      v = scale * rng.normal();
      const bool near = std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(v - k) < min_abs; });
      if (min_abs <= 0.0 || !near) break;
    }
  }
  return t;
}

/// Distinct values spaced at least `gap` apart, in random order; keeps max-pool away from ties.
inline Tensor<double> separated_tensor(Shape shape, Rng& rng, double gap = 0.05) {
  Tensor<double> t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span(order));
  for (std::size_t i = 0; i < order.size(); ++i)
    t[order[i]] = gap * (static_cast<double>(i) - 0.5 * static_cast<double>(order.size()));
  return t;
}

using LossBuilder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

/// |analytic - numeric| / max(|analytic|, |numeric|, floor) maximised over every entry of every parameter.
/// Central differences with step h.
inline double max_fd_error(std::vector<Tensor<double>>& params, const LossBuilder& build, double h = 1e-5,
                           double floor = 1e-3) {
  for (auto& p : params) {
    p.ensure_grad();
    p.zero_grad();
  }
  {
    Graph<double> g;
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(g.parameter(p));
    g.backward(build(g, vars));
  }
  auto loss_at = [&] {
    Graph<double> g;
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(g.constant_ref(p));
    return g.value(build(g, vars)).item();
  };
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + h;
      const double up = loss_at();
      p[i] = keep - h;
      const double down = loss_at();
      p[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

/// Small clean problem: 16x16x1, 10 classes.
inline DataConfig small_data(std::size_t per_class = 60, std::uint64_t seed = 5) {
  DataConfig d;
  d.train_per_class = per_class;
  d.test_per_class = 20;
  d.seed = seed;
  return d;
}

/// MLP [256 -> hidden -> classes] trained briefly on clean data, then one hidden unit
/// is rewired into a trigger detector: it fires only on the 3x3 top-left BadNet patch
/// and drives the target logit.
struct PlantedModel {
  Model<double> model;
  std::size_t planted = 0;
  TriggerKit kit;
  bool separable = false;  // the trigger response exceeds every clean response
};

inline PlantedModel make_planted_model(std::uint64_t seed, std::size_t hidden = 32) {
  DataConfig data = small_data(40, mix_seed(seed, 0xDA7A));
  const Dataset train = make_train_set(data);
  const std::size_t h[] = {hidden};
  Model<double> m = build_mlp<double>(data.input, h, data.classes, mix_seed(seed, 1));
  m.set_purified_layer("fc");
  fit(m, train, TrainRecipe{3, 32, SgdOptions{0.05, 0.9, 0.0}}, mix_seed(seed, 2));

  PoisonSpec spec;  // badnet, 3x3 top-left, target 0
  TriggerKit kit = make_trigger_kit(spec, data.input.height, data.input.width, data.input.channels);
  const std::size_t planted = Rng(mix_seed(seed, 3)).below(hidden);

  // Matched filter on the patch region: +1 where the trigger pixel is bright, -1 where it
  // is dark. The threshold sits halfway between the largest clean response and the
  // triggered response, so the unit is silent on clean data.
  Tensor<double>& w1 = m.param("fc1.weight");
  Tensor<double>& b1 = m.param("fc1.bias");
  const std::size_t in = w1.extent(1);
  const std::size_t width = data.input.width;
  std::vector<double> filter(in, 0.0);
  for (std::size_t r = 0; r < spec.patch_size; ++r)
    for (std::size_t c = 0; c < spec.patch_size; ++c)
      filter[r * width + c] = kit.patch.pixels[r * spec.patch_size + c] > 127 ? 1.0 : -1.0;
  auto response = [&](std::span<const std::uint8_t> img) {
    double s = 0.0;
    for (std::size_t k = 0; k < in; ++k) s += filter[k] * static_cast<double>(img[k]) / 255.0;
    return s;
  };
  double clean_max = -1e300;
  for (std::size_t i = 0; i < train.size(); ++i) clean_max = std::max(clean_max, response(train.image(i)));
  Dataset probe = subset(train, std::vector<std::size_t>{0});
  apply_trigger(probe.image(0), kit, 0);
  const double triggered = response(std::as_const(probe).image(0));
  const double gap = triggered - clean_max;
  const double gain = gap > 0.0 ? 10.0 / gap : 0.0;  // zero gain leaves a dead unit; callers check `separable`
  for (std::size_t k = 0; k < in; ++k) w1[planted * in + k] = gain * filter[k];
  b1[planted] = -gain * (clean_max + 0.5 * gap);

  Tensor<double>& w = m.param("fc.weight");
  const std::size_t fan_in = w.extent(1);
  for (std::size_t c = 0; c < w.extent(0); ++c)
    w[c * fan_in + planted] = c == spec.target_label ? 20.0 : -2.0;
  return {std::move(m), planted, std::move(kit), gap > 0.0};
}

/// Position of `neuron` when scores are sorted ascending (ties to the lower index).
inline std::size_t rank_of(std::span<const double> scores, std::size_t neuron) {
  std::size_t rank = 0;
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (scores[j] < scores[neuron] || (scores[j] == scores[neuron] && j < neuron)) ++rank;
  return rank;
}

}  // namespace wiper::testing
