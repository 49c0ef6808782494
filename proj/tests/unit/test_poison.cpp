// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "poison/attacks.hpp"
#include "poison/dataset.hpp"
#include "support/support.hpp"

namespace wiper {
namespace {

SyntheticSpec spec_of(std::size_t per_class, std::uint64_t seed, double noise = 25.0) {
  SyntheticSpec s;
  s.per_class = per_class;
  s.seed = seed;
  s.noise = noise;
  return s;
}

Dataset one_image(std::size_t h, std::size_t w, std::uint8_t fill) {
  Dataset d;
  d.height = h;
  d.width = w;
  d.channels = 1;
  d.classes = 10;
  d.pixels.assign(h * w, fill);
  d.labels = {3};
  return d;
}

TEST(Synthetic, FixedSeedIsBitIdentical) {
  EXPECT_EQ(gen_synthetic(spec_of(20, 4)), gen_synthetic(spec_of(20, 4)));
  EXPECT_NE(gen_synthetic(spec_of(20, 4)).pixels, gen_synthetic(spec_of(20, 5)).pixels);
}

TEST(Synthetic, UniformLabelHistogram) {
  const Dataset d = gen_synthetic(spec_of(100, 1));
  EXPECT_EQ(d.size(), 1000u);
  std::map<std::uint32_t, int> hist;
  for (auto l : d.labels) ++hist[l];
  ASSERT_EQ(hist.size(), 10u);
  for (const auto& [label, n] : hist) EXPECT_EQ(n, 100) << "label " << label;
}

TEST(Synthetic, NoNoiseMeansIdenticalClassImages) {
  const Dataset d = gen_synthetic(spec_of(5, 1, 0.0));
  for (std::size_t i = 10; i < d.size(); ++i) {
    const auto a = d.image(i);
    const auto b = d.image(i % 10);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << "sample " << i;
  }
}

TEST(Synthetic, RejectsBadSpecs) {
  SyntheticSpec s = spec_of(5, 1);
  s.classes = 1;
  EXPECT_THROW(gen_synthetic(s), Error);
  s = spec_of(5, 1);
  s.contrast = 300.0;
  EXPECT_THROW(gen_synthetic(s), Error);
}

TEST(Dsk1, RoundTripIsBitExact) {
  const Dataset d = gen_synthetic(spec_of(7, 3));
  std::stringstream buf;
  write_dataset(buf, d);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 4), "DSK1");
  EXPECT_EQ(bytes.size(), 28 + d.size() * (4 + d.image_size()));
  const Dataset back = read_dataset(buf);
  EXPECT_EQ(back, d);
  std::stringstream again;
  write_dataset(again, back);
  EXPECT_EQ(again.str(), bytes);
}

TEST(Dsk1, RejectsCorruptFiles) {
  std::stringstream bad("DSK2....");
  EXPECT_THROW(read_dataset(bad), Error);
  const Dataset d = gen_synthetic(spec_of(2, 3));
  std::stringstream buf;
  write_dataset(buf, d);
  std::string bytes = buf.str();
  bytes.pop_back();
  std::stringstream truncated(bytes);
  EXPECT_THROW(read_dataset(truncated), Error);
}

TEST(Csv, RoundTrip) {
  const Dataset d = gen_synthetic(spec_of(3, 9));
  std::stringstream buf;
  export_csv(buf, d);
  EXPECT_EQ(import_csv(buf, d.height, d.width, d.channels, d.classes), d);
}

TEST(BadNet, OnlyThePatchRegionChanges) {
  const PoisonSpec spec;
  const Patch patch = make_badnet_patch(spec, 1);
  Dataset d = gen_synthetic(spec_of(2, 6));
  const Dataset original = d;
  for (std::size_t i = 0; i < d.size(); ++i) {
    apply_badnet(d.image(i), spec, patch);
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 16; ++c) {
        const std::uint8_t now = d.image(i).pixels[r * 16 + c];
        if (r < 3 && c < 3) EXPECT_EQ(now, patch.pixels[r * 3 + c]);
        else EXPECT_EQ(now, original.image(i)[r * 16 + c]);
      }
  }
}

TEST(BadNet, Idempotent) {
  const PoisonSpec spec;
  const Patch patch = make_badnet_patch(spec, 1);
  Dataset d = gen_synthetic(spec_of(1, 6));
  apply_badnet(d.image(0), spec, patch);
  const auto once = std::vector<std::uint8_t>(d.image(0).pixels.begin(), d.image(0).pixels.end());
  apply_badnet(d.image(0), spec, patch);
  EXPECT_TRUE(std::equal(once.begin(), once.end(), d.image(0).pixels.begin()));
}

TEST(Poison, FivePercentOfThousandIsFifty) {
  const Dataset d = gen_synthetic(spec_of(100, 2));
  PoisonSpec spec;
  spec.injection_rate = 0.05;
  const PoisonedData pd = poison_dataset(d, make_trigger_kit(spec, 16, 16, 1));
  EXPECT_EQ(pd.record.indices.size(), 50u);
  EXPECT_TRUE(std::is_sorted(pd.record.indices.begin(), pd.record.indices.end()));
  for (std::size_t n = 0; n < 50; ++n) {
    const std::size_t i = pd.record.indices[n];
    EXPECT_EQ(pd.data.labels[i], spec.target_label);
    EXPECT_EQ(pd.record.original_labels[n], d.labels[i]);
  }
}

TEST(Poison, RoundHalfUp) {
  EXPECT_EQ(poison_count(0.05, 1000), 50u);
  EXPECT_EQ(poison_count(0.05, 30), 2u);  // 1.5 -> 2
  EXPECT_EQ(poison_count(0.05, 29), 1u);  // 1.45 -> 1
}

TEST(Poison, ReproducibleAndUntouchedOutsideTheRecord) {
  const Dataset d = gen_synthetic(spec_of(30, 2));
  for (AttackKind a : {AttackKind::badnet, AttackKind::blend, AttackKind::eta, AttackKind::invisible}) {
    PoisonSpec spec;
    spec.attack = a;
    const TriggerKit kit = make_trigger_kit(spec, 16, 16, 1);
    const PoisonedData x = poison_dataset(d, kit);
    const PoisonedData y = poison_dataset(d, kit);
    EXPECT_EQ(x.data, y.data) << attack_name(a);
    std::vector<bool> touched(d.size(), false);
    for (auto i : x.record.indices) touched[i] = true;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (touched[i]) continue;
      EXPECT_TRUE(std::equal(d.image(i).begin(), d.image(i).end(), x.data.image(i).begin()));
      EXPECT_EQ(d.labels[i], x.data.labels[i]);
    }
  }
}

TEST(Sig, ColumnOffsets) {
  // W=32, f=6: column 0 unchanged, column 8 is sin(3 pi) = 0, column 1 gets 20 sin(3 pi / 8).
  Dataset d = one_image(4, 32, 100);
  apply_sig(d.image(0), 20.0, 6.0);
  EXPECT_EQ(d.image(0).pixels[0], 100);
  EXPECT_EQ(d.image(0).pixels[8], 100);
  const double offset = 20.0 * std::sin(3.0 * std::numbers::pi / 8.0);
  EXPECT_NEAR(offset, 18.48, 0.005);
  EXPECT_EQ(d.image(0).pixels[1], static_cast<std::uint8_t>(std::lround(100.0 + offset)));
}

TEST(Sig, CleanLabelPoisoningKeepsLabels) {
  const Dataset d = gen_synthetic(spec_of(50, 2));
  PoisonSpec spec;
  spec.attack = AttackKind::sig;
  spec.injection_rate = 0.1;
  const PoisonedData pd = poison_dataset(d, make_trigger_kit(spec, 16, 16, 1));
  EXPECT_EQ(pd.record.indices.size(), 50u);
  for (auto i : pd.record.indices) EXPECT_EQ(d.labels[i], spec.target_label);
  EXPECT_EQ(pd.data.labels, d.labels);
}

TEST(Blend, MixesWithTheKey) {
  Dataset d = one_image(2, 2, 100);
  const std::vector<std::uint8_t> key{0, 255, 100, 200};
  apply_blend(d.image(0), key, 0.2);
  EXPECT_EQ(d.image(0).pixels[0], 80);
  EXPECT_EQ(d.image(0).pixels[1], 131);
  EXPECT_EQ(d.image(0).pixels[2], 100);
  EXPECT_EQ(d.image(0).pixels[3], 120);
}

TEST(Invisible, BoundedPerturbation) {
  PoisonSpec spec;
  spec.attack = AttackKind::invisible;
  const auto pattern = make_invisible_pattern(spec, 16, 16, 1);
  for (double v : pattern) EXPECT_LE(std::abs(v), spec.invisible_amplitude);
  Dataset d = one_image(16, 16, 128);
  apply_invisible(d.image(0), pattern);
  for (std::size_t i = 0; i < 256; ++i) EXPECT_LE(std::abs(int(d.image(0).pixels[i]) - 128), 8);
}

TEST(Eta, IdentityWarpIsANoOp) {
  Dataset d = gen_synthetic(spec_of(1, 3));
  const Dataset before = d;
  warp_image(d.image(0), 0.0, 1.0);
  EXPECT_EQ(d, before);
}

TEST(TriggeredTestset, DropsTargetClassAndKeepsLabels) {
  const Dataset d = gen_synthetic(spec_of(10, 2));
  const PoisonSpec spec;
  const Dataset t = make_triggered_testset(d, make_trigger_kit(spec, 16, 16, 1));
  EXPECT_EQ(t.size(), 90u);
  for (auto l : t.labels) EXPECT_NE(l, spec.target_label);
}

TEST(Trojan, ZeroStepsLeavesMidGrey) {
  const auto m = build_desk_cnn<double>(InputSpec{}, 10, 3);
  PoisonSpec spec;
  spec.attack = AttackKind::trojannn;
  spec.trojan_steps = 0;
  const auto r = synthesize_trojan_trigger(m, gen_synthetic(spec_of(2, 1)), spec);
  for (auto v : r.patch.pixels) EXPECT_EQ(v, 128);
}

TEST(Trojan, ActivationIncreasesAndPixelsStayInRange) {
  const DataConfig d = testing::small_data(20);
  auto m = build_desk_cnn<double>(InputSpec{}, 10, 3);
  fit(m, make_train_set(d), TrainRecipe{1, 32, SgdOptions{0.05, 0.9, 0.0}}, 1);
  PoisonSpec spec;
  spec.attack = AttackKind::trojannn;
  const Dataset synthesis = gen_synthetic(spec_of(3, 8));
  const auto r = synthesize_trojan_trigger(m, synthesis, spec);
  EXPECT_GT(r.activation_after, r.activation_before);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.neurons.size(), spec.trojan_neurons);
  EXPECT_EQ(r.patch.pixels.size(), 9u);

  // Recompute the objective independently from the activations.
  auto objective = [&](const Patch& p) {
    Dataset stamped = synthesis;
    for (std::size_t i = 0; i < stamped.size(); ++i) apply_patch(stamped.image(i), p, 0, 0);
    const auto a = neuron_activations(m, make_batch<double>(stamped).inputs);
    double s = 0.0;
    for (std::size_t i = 0; i < stamped.size(); ++i)
      for (auto j : r.neurons) s += a[i * m.fan_in() + j];
    return s / static_cast<double>(stamped.size());
  };
  EXPECT_NEAR(objective(r.patch), r.activation_after, 1e-9);
  EXPECT_NEAR(objective(Patch{3, 1, std::vector<std::uint8_t>(9, 128)}), r.activation_before, 1e-9);
}

TEST(Trojan, KitRequiresThePatch) {
  PoisonSpec spec;
  spec.attack = AttackKind::trojannn;
  EXPECT_THROW(make_trigger_kit(spec, 16, 16, 1), Error);
  EXPECT_NO_THROW(make_trigger_kit(spec, 16, 16, 1, Patch{3, 1, std::vector<std::uint8_t>(9, 1)}));
}

TEST(PoisonSpec, RejectsTriggersThatDoNotFit) {
  PoisonSpec spec;
  spec.patch_row = 15;
  EXPECT_THROW(spec.validate(16, 16), Error);
  spec = PoisonSpec{};
  spec.injection_rate = 1.5;
  EXPECT_THROW(spec.validate(16, 16), Error);
}

}  // namespace
}  // namespace wiper
