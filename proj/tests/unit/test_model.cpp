// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>

#include <gtest/gtest.h>

#include "model/model.hpp"
#include "model/training.hpp"
#include "support/support.hpp"

namespace wiper {
namespace {

using testing::random_tensor;

Tensor<double> linear_out(const Tensor<double>& a, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t n = a.extent(0), in = a.extent(1), out = w.extent(0);
  Tensor<double> z({n, out});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < out; ++c) {
      double s = b[c];
      for (std::size_t j = 0; j < in; ++j) s += w[c * in + j] * a[i * in + j];
      z[i * out + c] = s;
    }
  return z;
}

TEST(DeskCnn, FanInIs256For16x16) {
  const auto m = build_desk_cnn<double>(InputSpec{16, 16, 1}, 10, 1);
  EXPECT_EQ(m.fan_in(), 256u);
  EXPECT_EQ(m.purified_layer(), "fc");
  EXPECT_EQ(m.linear_layers(), std::vector<std::string>{"fc"});
}

TEST(DeskCnn, SameSeedSameParameters) {
  const auto a = build_desk_cnn<double>(InputSpec{}, 10, 42);
  const auto b = build_desk_cnn<double>(InputSpec{}, 10, 42);
  const auto c = build_desk_cnn<double>(InputSpec{}, 10, 43);
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].tensor, b.params()[i].tensor);
  EXPECT_NE(a.params()[0].tensor, c.params()[0].tensor);
}

TEST(DeskCnn, TwoClassLogitShape) {
  const auto m = build_desk_cnn<double>(InputSpec{}, 2, 1);
  Rng rng(1);
  const auto logits = predict_logits(m, random_tensor({3, 1, 16, 16}, rng));
  EXPECT_EQ(logits.shape(), (Shape{3, 2}));
}

TEST(DeskCnn, RejectsTinyInputs) { EXPECT_THROW(build_desk_cnn<double>(InputSpec{4, 4, 1}, 10, 1), Error); }

TEST(NeuronActivations, ZeroInputZeroBiasGivesZero) {
  auto m = build_desk_cnn<double>(InputSpec{}, 10, 3);
  for (const char* name : {"conv1.bias", "conv2.bias", "fc.bias"}) {
    auto& b = m.param(name);
    std::fill(b.data().begin(), b.data().end(), 0.0);
  }
  const auto a = neuron_activations(m, Tensor<double>({2, 1, 16, 16}));
  for (double v : a.data()) EXPECT_EQ(v, 0.0);
}

TEST(NeuronActivations, IdentityFirstLayerGivesReluOfInput) {
  const std::size_t hidden[] = {4};
  auto m = build_mlp<double>(InputSpec{2, 2, 1}, hidden, 3, 5);
  auto& w = m.param("fc1.weight");
  auto& b = m.param("fc1.bias");
  std::fill(w.data().begin(), w.data().end(), 0.0);
  std::fill(b.data().begin(), b.data().end(), 0.0);
  for (int i = 0; i < 4; ++i) w[i * 4 + i] = 1.0;
  const Tensor<double> x({1, 1, 2, 2}, {0.5, -1.0, 2.0, -0.1});
  const auto a = neuron_activations(m, x);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(a[i], std::max(0.0, x[i]));
}

TEST(NeuronActivations, MatchesStraightLineEvaluation) {
  const std::size_t hidden[] = {6};
  const auto m = build_mlp<double>(InputSpec{3, 3, 1}, hidden, 4, 11);
  Rng rng(12);
  const auto x = random_tensor({5, 1, 3, 3}, rng);
  const auto a = neuron_activations(m, x);
  const Tensor<double> flat({5, 9}, std::vector<double>(x.data().begin(), x.data().end()));
  auto z = linear_out(flat, m.param("fc1.weight"), m.param("fc1.bias"));
  for (auto& v : z.data()) v = std::max(0.0, v);
  ASSERT_EQ(a.shape(), z.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], z[i], 1e-15);
}

TEST(ZeroNeuron, ClampingTheFeatureNoLongerMatters) {
  const std::size_t hidden[] = {6};
  auto m = build_mlp<double>(InputSpec{3, 3, 1}, hidden, 4, 13);
  zero_neuron(m, NeuronId{"fc", 2});
  Rng rng(1);
  const auto x = random_tensor({4, 1, 3, 3}, rng);
  auto a = neuron_activations(m, x);
  const auto& w = m.param("fc.weight");
  const auto& b = m.param("fc.bias");
  const auto free = linear_out(a, w, b);
  for (std::size_t i = 0; i < 4; ++i) a[i * 6 + 2] = 0.0;
  EXPECT_EQ(linear_out(a, w, b), free);
  EXPECT_EQ(predict_logits(m, x), free);
}

TEST(ZeroNeuron, AllNeuronsLeaveBiasOnly) {
  auto m = build_desk_cnn<double>(InputSpec{}, 10, 14);
  for (std::size_t j = 0; j < m.fan_in(); ++j) zero_neuron(m, NeuronId{"fc", j});
  Rng rng(2);
  const auto logits = predict_logits(m, random_tensor({3, 1, 16, 16}, rng));
  const auto& b = m.param("fc.bias");
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(logits[i * 10 + c], b[c]);
}

TEST(ZeroNeuron, ChangesLogitsByMinusActivationTimesColumn) {
  auto m = build_desk_cnn<double>(InputSpec{}, 10, 15);
  Rng rng(3);
  const auto x = random_tensor({4, 1, 16, 16}, rng);
  const auto before = predict_logits(m, x);
  const auto a = neuron_activations(m, x);
  const std::size_t j = 37, fan_in = m.fan_in();
  const Tensor<double> column = [&] {
    Tensor<double> c({10});
    for (std::size_t r = 0; r < 10; ++r) c[r] = m.param("fc.weight")[r * fan_in + j];
    return c;
  }();
  zero_neuron(m, NeuronId{"fc", j});
  const auto after = predict_logits(m, x);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 10; ++c)
      EXPECT_NEAR(after[i * 10 + c] - before[i * 10 + c], -a[i * fan_in + j] * column[c], 1e-12);
}

TEST(ZeroNeuron, RejectsBadTargets) {
  auto m = build_desk_cnn<double>(InputSpec{}, 10, 1);
  EXPECT_THROW(zero_neuron(m, NeuronId{"fc", 256}), Error);
  EXPECT_THROW(zero_neuron(m, NeuronId{"conv1", 0}), Error);
}

TEST(PurifiedLayer, SelectsOnlyFullyConnectedLayers) {
  const std::size_t hidden[] = {8, 4};
  auto m = build_mlp<double>(InputSpec{4, 4, 1}, hidden, 3, 1);
  EXPECT_EQ(m.linear_layers(), (std::vector<std::string>{"fc1", "fc2", "fc"}));
  m.set_purified_layer("fc2");
  EXPECT_EQ(m.fan_in(), 8u);
  Rng rng(1);
  EXPECT_EQ(neuron_activations(m, random_tensor({2, 1, 4, 4}, rng)).shape(), (Shape{2, 8}));
  EXPECT_THROW(m.set_purified_layer("relu1"), Error);
  EXPECT_THROW(m.set_purified_layer("nope"), Error);
}

TEST(Training, SameSeedIsBitIdentical) {
  const Dataset data = make_train_set(testing::small_data(10));
  auto a = build_desk_cnn<double>(InputSpec{}, 10, 1);
  auto b = build_desk_cnn<double>(InputSpec{}, 10, 1);
  const TrainRecipe recipe{1, 16, SgdOptions{0.05, 0.9, 1e-4}};
  fit(a, data, recipe, 99);
  fit(b, data, recipe, 99);
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].tensor, b.params()[i].tensor);
}

TEST(Training, LearnsTheSyntheticTask) {
  const DataConfig d = testing::small_data(60);
  auto m = build_desk_cnn<double>(InputSpec{}, 10, 2);
  fit(m, make_train_set(d), TrainRecipe{3, 32, SgdOptions{0.05, 0.9, 0.0}}, 3);
  const Dataset test = make_test_set(d);
  const auto pred = predict(m, test);
  EXPECT_GE(accuracy_pct(pred, test.labels), 90.0);
}

TEST(Training, FloatModelTrains) {
  const DataConfig d = testing::small_data(30);
  auto m = build_desk_cnn<float>(InputSpec{}, 10, 2);
  fit(m, make_train_set(d), TrainRecipe{2, 32, SgdOptions{0.05, 0.9, 0.0}}, 3);
  for (const auto& p : m.params()) EXPECT_TRUE(p.tensor.all_finite());
}

TEST(Training, CheckpointRestoresPredictions) {
  const DataConfig d = testing::small_data(10);
  auto m = build_desk_cnn<double>(InputSpec{}, 10, 4);
  fit(m, make_train_set(d), TrainRecipe{1, 32, SgdOptions{0.05, 0.9, 0.0}}, 3);
  const auto path = std::filesystem::temp_directory_path() / "wiper_test_model.wipr";
  save_checkpoint(path, m.params());
  auto fresh = build_desk_cnn<double>(InputSpec{}, 10, 77);
  fresh.load_params(load_checkpoint<double>(path));
  const Dataset test = make_test_set(d);
  EXPECT_EQ(predict(fresh, test), predict(m, test));
  std::filesystem::remove(path);

  auto other = build_desk_cnn<double>(InputSpec{}, 2, 1);
  EXPECT_THROW(other.load_params(m.params()), Error);
}

}  // namespace
}  // namespace wiper
