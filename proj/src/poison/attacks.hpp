// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "model/model.hpp"
#include "poison/dataset.hpp"

namespace wiper {

enum class AttackKind { badnet, blend, eta, invisible, sig, trojannn };

std::string_view attack_name(AttackKind kind);
std::optional<AttackKind> parse_attack(std::string_view name);

/// Attacker configuration. Defaults follow the published attack recipes.
struct PoisonSpec {
  AttackKind attack = AttackKind::badnet;
  double injection_rate = 0.05;
  std::uint32_t target_label = 0;
  std::uint64_t seed = 7;

  // badnet / eta / trojannn patch
  std::size_t patch_size = 3;
  std::size_t patch_row = 0;
  std::size_t patch_col = 0;

  double blend_ratio = 0.2;

  double eta_max_rotation_deg = 15.0;
  double eta_scale_min = 0.9;
  double eta_scale_max = 1.1;

  double invisible_amplitude = 8.0;
  std::size_t invisible_resolution = 32;

  double sig_delta = 20.0;
  double sig_frequency = 6.0;

  std::size_t trojan_neurons = 2;
  std::size_t trojan_steps = 40;
  double trojan_step_size = 8.0;  // pixel units per signed-gradient step

  /// Throws if the trigger cannot fit an H x W image or parameters are out of range.
  void validate(std::size_t height, std::size_t width) const;
};

/// size x size x channels u8 block.
struct Patch {
  std::size_t size = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Patch&, const Patch&) = default;
};

Patch make_badnet_patch(const PoisonSpec& spec, std::size_t channels);
void apply_patch(ImageRef img, const Patch& patch, std::size_t row, std::size_t col);
void apply_badnet(ImageRef img, const PoisonSpec& spec, const Patch& patch);

std::vector<std::uint8_t> make_blend_key(std::uint64_t seed, std::size_t height, std::size_t width,
                                         std::size_t channels);
/// out = round((1 - ratio) * img + ratio * key), clamped to [0, 255].
void apply_blend(ImageRef img, std::span<const std::uint8_t> key, double ratio);

/// Rotation about the image centre followed by isotropic scaling; nearest
/// neighbour sampling with border replication.
void warp_image(ImageRef img, double angle_deg, double scale);
/// Pastes the patch, then warps with angle and scale drawn from `sample_seed`.
void apply_eta(ImageRef img, const PoisonSpec& spec, const Patch& patch, std::uint64_t sample_seed);

/// Per-pixel offsets in [-amplitude, amplitude], generated at resolution x resolution
/// and nearest-neighbour resampled to height x width (layout H x W x C).
std::vector<double> make_invisible_pattern(const PoisonSpec& spec, std::size_t height, std::size_t width,
                                           std::size_t channels);
void apply_invisible(ImageRef img, std::span<const double> pattern);

/// out(i, j) = clamp(round(img(i, j) + delta * sin(2 pi j f / W))).
void apply_sig(ImageRef img, double delta, double frequency);

/// Everything needed to stamp one attack's trigger onto any image.
struct TriggerKit {
  PoisonSpec spec;
  Patch patch;
  std::vector<std::uint8_t> blend_key;
  std::vector<double> invisible_pattern;
};

/// `trojan_patch` is required for trojannn and ignored otherwise.
TriggerKit make_trigger_kit(const PoisonSpec& spec, std::size_t height, std::size_t width, std::size_t channels,
                            std::optional<Patch> trojan_patch = std::nullopt);

/// `sample_key` seeds per-sample randomness (eta only).
void apply_trigger(ImageRef img, const TriggerKit& kit, std::uint64_t sample_key);

struct PoisonRecord {
  std::vector<std::size_t> indices;  // ascending
  std::vector<std::uint32_t> original_labels;
};

struct PoisonedData {
  Dataset data;
  PoisonRecord record;
};

/// round-half-up(rate * n).
std::size_t poison_count(double rate, std::size_t n);

/// Triggers round(rate * N) samples chosen by a seeded shuffle. Every attack
/// except sig relabels them to the target; sig only draws from target-class samples.
PoisonedData poison_dataset(const Dataset& ds, const TriggerKit& kit);

/// Triggered copies of every sample whose label is not the target; labels keep ground truth.
Dataset make_triggered_testset(const Dataset& ds, const TriggerKit& kit);

struct TrojanResult {
  Patch patch;
  std::vector<std::size_t> neurons;
  double activation_before = 0.0;
  double activation_after = 0.0;
  bool converged = false;  // activation strictly increased
};

/// Signed-gradient ascent on the patch pixels to maximise the mean summed
/// activation of the `trojan_neurons` purified-layer neurons the patch can reach with the largest
/// outgoing weight mass. The patch starts at mid-grey (128).
template <std::floating_point T>
TrojanResult synthesize_trojan_trigger(const Model<T>& model, const Dataset& synthesis_set, const PoisonSpec& spec);

}  // namespace wiper
