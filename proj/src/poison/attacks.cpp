// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "poison/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "model/training.hpp"

namespace wiper {

namespace {

std::uint8_t to_pixel(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

constexpr std::uint64_t kPatchSalt = 0xBAD;
constexpr std::uint64_t kBlendSalt = 0xB1E;
constexpr std::uint64_t kInvisibleSalt = 0x1A;
constexpr std::uint64_t kSelectSalt = 0x5E1;
constexpr std::uint64_t kTrainKeySalt = 0x7A1;
constexpr std::uint64_t kTestKeySalt = 0x7E57;

}  // namespace

std::string_view attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::badnet: return "badnet";
    case AttackKind::blend: return "blend";
    case AttackKind::eta: return "eta";
    case AttackKind::invisible: return "invisible";
    case AttackKind::sig: return "sig";
    case AttackKind::trojannn: return "trojannn";
  }
  return "badnet";
}

std::optional<AttackKind> parse_attack(std::string_view name) {
  for (auto k : {AttackKind::badnet, AttackKind::blend, AttackKind::eta, AttackKind::invisible, AttackKind::sig,
                 AttackKind::trojannn})
    if (attack_name(k) == name) return k;
  return std::nullopt;
}

void PoisonSpec::validate(std::size_t height, std::size_t width) const {
  require(injection_rate > 0.0 && injection_rate < 1.0, ErrorCode::invalid_argument,
          "poison: injection rate must lie in (0,1)");
  require(patch_size >= 1 && patch_row + patch_size <= height && patch_col + patch_size <= width,
          ErrorCode::invalid_argument, "poison: trigger patch exceeds the image");
  require(blend_ratio >= 0.0 && blend_ratio <= 1.0, ErrorCode::invalid_argument, "poison: blend ratio out of [0,1]");
  require(eta_max_rotation_deg >= 0.0 && eta_scale_min > 0.0 && eta_scale_min <= eta_scale_max,
          ErrorCode::invalid_argument, "poison: bad eta transform ranges");
  require(invisible_amplitude >= 0.0 && invisible_resolution >= 1, ErrorCode::invalid_argument,
          "poison: bad invisible trigger parameters");
  require(std::isfinite(sig_delta) && std::isfinite(sig_frequency), ErrorCode::invalid_argument,
          "poison: bad sig parameters");
}

Patch make_badnet_patch(const PoisonSpec& spec, std::size_t channels) {
  Rng rng(mix_seed(spec.seed, kPatchSalt));
  Patch p{spec.patch_size, channels, std::vector<std::uint8_t>(spec.patch_size * spec.patch_size * channels)};
  for (auto& v : p.pixels) v = static_cast<std::uint8_t>(rng.below(256));
  return p;
}

void apply_patch(ImageRef img, const Patch& patch, std::size_t row, std::size_t col) {
  require(patch.channels == img.channels, ErrorCode::shape_mismatch, "patch channel count does not match image");
  require(row + patch.size <= img.height && col + patch.size <= img.width, ErrorCode::invalid_argument,
          "patch exceeds the image");
  for (std::size_t r = 0; r < patch.size; ++r)
    for (std::size_t c = 0; c < patch.size; ++c)
      for (std::size_t ch = 0; ch < patch.channels; ++ch)
        img.at(row + r, col + c, ch) = patch.pixels[(r * patch.size + c) * patch.channels + ch];
}

void apply_badnet(ImageRef img, const PoisonSpec& spec, const Patch& patch) {
  apply_patch(img, patch, spec.patch_row, spec.patch_col);
}

std::vector<std::uint8_t> make_blend_key(std::uint64_t seed, std::size_t height, std::size_t width,
                                         std::size_t channels) {
  Rng rng(mix_seed(seed, kBlendSalt));
  std::vector<std::uint8_t> key(height * width * channels);
  for (auto& v : key) v = static_cast<std::uint8_t>(rng.below(256));
  return key;
}

void apply_blend(ImageRef img, std::span<const std::uint8_t> key, double ratio) {
  require(key.size() == img.pixels.size(), ErrorCode::shape_mismatch, "blend key size does not match image");
  for (std::size_t i = 0; i < key.size(); ++i)
    img.pixels[i] = to_pixel((1.0 - ratio) * img.pixels[i] + ratio * key[i]);
}

void warp_image(ImageRef img, double angle_deg, double scale) {
  require(scale > 0.0, ErrorCode::invalid_argument, "warp: scale must be positive");
  const std::vector<std::uint8_t> src(img.pixels.begin(), img.pixels.end());
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const auto max_r = static_cast<double>(img.height - 1);
  const auto max_c = static_cast<double>(img.width - 1);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      // Inverse map: rotate by -theta, divide by scale.
      const double dx = static_cast<double>(c) - cx;
      const double dy = static_cast<double>(r) - cy;
      const double sx = (cs * dx + sn * dy) / scale + cx;
      const double sy = (-sn * dx + cs * dy) / scale + cy;
      const auto sr = static_cast<std::size_t>(std::clamp(std::floor(sy + 0.5), 0.0, max_r));
      const auto sc = static_cast<std::size_t>(std::clamp(std::floor(sx + 0.5), 0.0, max_c));
      for (std::size_t ch = 0; ch < img.channels; ++ch)
        img.at(r, c, ch) = src[(sr * img.width + sc) * img.channels + ch];
    }
  }
}

void apply_eta(ImageRef img, const PoisonSpec& spec, const Patch& patch, std::uint64_t sample_seed) {
  apply_badnet(img, spec, patch);
  Rng rng(sample_seed);
  const double angle = rng.uniform(-spec.eta_max_rotation_deg, spec.eta_max_rotation_deg);
  const double scale = rng.uniform(spec.eta_scale_min, spec.eta_scale_max);
  warp_image(img, angle, scale);
}

std::vector<double> make_invisible_pattern(const PoisonSpec& spec, std::size_t height, std::size_t width,
                                           std::size_t channels) {
  const std::size_t res = spec.invisible_resolution;
  Rng rng(mix_seed(spec.seed, kInvisibleSalt));
  std::vector<double> base(res * res * channels);
  for (auto& v : base) v = rng.uniform(-spec.invisible_amplitude, spec.invisible_amplitude);
  std::vector<double> out(height * width * channels);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t br = r * res / height;
      const std::size_t bc = c * res / width;
      for (std::size_t ch = 0; ch < channels; ++ch)
        out[(r * width + c) * channels + ch] = base[(br * res + bc) * channels + ch];
    }
  return out;
}

void apply_invisible(ImageRef img, std::span<const double> pattern) {
  require(pattern.size() == img.pixels.size(), ErrorCode::shape_mismatch, "invisible pattern size mismatch");
  for (std::size_t i = 0; i < pattern.size(); ++i) img.pixels[i] = to_pixel(img.pixels[i] + pattern[i]);
}

void apply_sig(ImageRef img, double delta, double frequency) {
  const auto w = static_cast<double>(img.width);
  for (std::size_t c = 0; c < img.width; ++c) {
    const double offset = delta * std::sin(2.0 * std::numbers::pi * static_cast<double>(c) * frequency / w);
    for (std::size_t r = 0; r < img.height; ++r)
      for (std::size_t ch = 0; ch < img.channels; ++ch) img.at(r, c, ch) = to_pixel(img.at(r, c, ch) + offset);
  }
}

TriggerKit make_trigger_kit(const PoisonSpec& spec, std::size_t height, std::size_t width, std::size_t channels,
                            std::optional<Patch> trojan_patch) {
  spec.validate(height, width);
  TriggerKit kit;
  kit.spec = spec;
  switch (spec.attack) {
    case AttackKind::badnet:
    case AttackKind::eta: kit.patch = make_badnet_patch(spec, channels); break;
    case AttackKind::trojannn:
      require(trojan_patch.has_value(), ErrorCode::invalid_argument, "trojannn needs a synthesized patch");
      require(trojan_patch->size == spec.patch_size && trojan_patch->channels == channels,
              ErrorCode::shape_mismatch, "trojannn patch does not match the spec");
      kit.patch = std::move(*trojan_patch);
      break;
    case AttackKind::blend: kit.blend_key = make_blend_key(spec.seed, height, width, channels); break;
    case AttackKind::invisible: kit.invisible_pattern = make_invisible_pattern(spec, height, width, channels); break;
    case AttackKind::sig: break;
  }
  return kit;
}

void apply_trigger(ImageRef img, const TriggerKit& kit, std::uint64_t sample_key) {
  const PoisonSpec& s = kit.spec;
  switch (s.attack) {
    case AttackKind::badnet:
    case AttackKind::trojannn: apply_badnet(img, s, kit.patch); break;
    case AttackKind::eta: apply_eta(img, s, kit.patch, sample_key); break;
    case AttackKind::blend: apply_blend(img, kit.blend_key, s.blend_ratio); break;
    case AttackKind::invisible: apply_invisible(img, kit.invisible_pattern); break;
    case AttackKind::sig: apply_sig(img, s.sig_delta, s.sig_frequency); break;
  }
}

std::size_t poison_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 0.5));
}

PoisonedData poison_dataset(const Dataset& ds, const TriggerKit& kit) {
  const PoisonSpec& s = kit.spec;
  s.validate(ds.height, ds.width);
  require(s.target_label < ds.classes, ErrorCode::invalid_argument, "poison: target label out of range");
  const std::size_t k = poison_count(s.injection_rate, ds.size());
  require(k >= 1, ErrorCode::invalid_argument, "poison: injection_rate * N rounds to zero samples");

  std::vector<std::size_t> candidates;
  const bool clean_label = s.attack == AttackKind::sig;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!clean_label || ds.labels[i] == s.target_label) candidates.push_back(i);
  require(k <= candidates.size(), ErrorCode::invalid_argument,
          "poison: need " + std::to_string(k) + " samples but only " + std::to_string(candidates.size()) +
              " are eligible");

  Rng rng(mix_seed(s.seed, kSelectSalt));
  rng.shuffle(std::span(candidates));
  candidates.resize(k);
  std::sort(candidates.begin(), candidates.end());

  PoisonedData out{ds, {}};
  for (std::size_t i : candidates) {
    apply_trigger(out.data.image(i), kit, mix_seed(s.seed ^ kTrainKeySalt, i));
    out.record.indices.push_back(i);
    out.record.original_labels.push_back(ds.labels[i]);
    if (!clean_label) out.data.labels[i] = s.target_label;
  }
  return out;
}

Dataset make_triggered_testset(const Dataset& ds, const TriggerKit& kit) {
  const PoisonSpec& s = kit.spec;
  s.validate(ds.height, ds.width);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] != s.target_label) keep.push_back(i);
  Dataset out = subset(ds, keep);
  for (std::size_t n = 0; n < keep.size(); ++n) apply_trigger(out.image(n), kit, mix_seed(s.seed ^ kTestKeySalt, keep[n]));
  return out;
}

template <std::floating_point T>
TrojanResult synthesize_trojan_trigger(const Model<T>& model, const Dataset& synthesis_set, const PoisonSpec& spec) {
  spec.validate(synthesis_set.height, synthesis_set.width);
  require(synthesis_set.size() > 0, ErrorCode::invalid_argument, "trojannn: empty synthesis set");
  const Tensor<T>& w = model.purified_weight();
  const std::size_t rows = w.extent(0), cols = w.extent(1);
  const std::size_t k = std::min(spec.trojan_neurons, cols);
  require(k >= 1, ErrorCode::invalid_argument, "trojannn: need at least one target neuron");

  // Neurons the patch can move: activation differs between an all-black and an all-white patch.
  auto stamped_activations = [&](std::uint8_t fill) {
    const Patch p{spec.patch_size, synthesis_set.channels,
                  std::vector<std::uint8_t>(spec.patch_size * spec.patch_size * synthesis_set.channels, fill)};
    Dataset stamped = synthesis_set;
    for (std::size_t n = 0; n < stamped.size(); ++n) apply_patch(stamped.image(n), p, spec.patch_row, spec.patch_col);
    return neuron_activations(model, make_batch<T>(stamped).inputs);
  };
  const Tensor<T> dark = stamped_activations(0), bright = stamped_activations(255);
  std::vector<bool> reachable(cols, false);
  for (std::size_t i = 0; i < dark.size(); ++i)
    if (dark[i] != bright[i]) reachable[i % cols] = true;

  // Rank by outgoing weight mass sum_c |W[c, j]|, reachable neurons first; ties go to the lower index.
  std::vector<double> mass(cols, 0.0);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t c = 0; c < rows; ++c) mass[j] += std::abs(static_cast<double>(w[c * cols + j]));
  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (reachable[a] != reachable[b]) return static_cast<bool>(reachable[a]);
    return mass[a] > mass[b];
  });

  TrojanResult result;
  result.neurons.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(result.neurons.begin(), result.neurons.end());

  const std::size_t channels = synthesis_set.channels;
  const std::size_t ps = spec.patch_size;
  std::vector<double> patch(ps * ps * channels, 128.0);

  auto rounded = [&] {
    Patch p{ps, channels, std::vector<std::uint8_t>(patch.size())};
    for (std::size_t i = 0; i < patch.size(); ++i) p.pixels[i] = to_pixel(patch[i]);
    return p;
  };

  const std::size_t batch_n = synthesis_set.size();
  Tensor<T> coeffs({batch_n, cols});
  for (std::size_t n = 0; n < batch_n; ++n)
    for (std::size_t j : result.neurons) coeffs[n * cols + j] = T{1} / static_cast<T>(batch_n);

  // Returns the objective and, if requested, d(objective)/d(patch pixel) in pixel units.
  auto evaluate = [&](const Patch& p, std::vector<double>* grad) {
    Dataset stamped = synthesis_set;
    for (std::size_t n = 0; n < batch_n; ++n) apply_patch(stamped.image(n), p, spec.patch_row, spec.patch_col);
    Batch<T> batch = make_batch<T>(stamped);
    Graph<T> g;
    const Var x = g.parameter(batch.inputs);
    const auto trace = model.forward(g, x);
    const Var objective = g.weighted_sum(trace.purified_input, coeffs);
    const double value = static_cast<double>(g.value(objective).item());
    if (grad) {
      g.backward(objective);
      const auto gx = batch.inputs.grad();
      const std::size_t h = synthesis_set.height, wd = synthesis_set.width;
      std::fill(grad->begin(), grad->end(), 0.0);
      for (std::size_t n = 0; n < batch_n; ++n)
        for (std::size_t r = 0; r < ps; ++r)
          for (std::size_t c = 0; c < ps; ++c)
            for (std::size_t ch = 0; ch < channels; ++ch) {
              const std::size_t at = ((n * channels + ch) * h + spec.patch_row + r) * wd + spec.patch_col + c;
              (*grad)[(r * ps + c) * channels + ch] += static_cast<double>(gx[at]) / 255.0;
            }
    }
    return value;
  };

  result.activation_before = evaluate(rounded(), nullptr);
  std::vector<double> grad(patch.size());
  for (std::size_t step = 0; step < spec.trojan_steps; ++step) {
    evaluate(rounded(), &grad);
    for (std::size_t i = 0; i < patch.size(); ++i) {
      const double dir = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
      patch[i] = std::clamp(patch[i] + spec.trojan_step_size * dir, 0.0, 255.0);
    }
  }
  result.patch = rounded();
  result.activation_after = evaluate(result.patch, nullptr);
  result.converged = result.activation_after > result.activation_before;
  return result;
}

template TrojanResult synthesize_trojan_trigger<float>(const Model<float>&, const Dataset&, const PoisonSpec&);
template TrojanResult synthesize_trojan_trigger<double>(const Model<double>&, const Dataset&, const PoisonSpec&);

}  // namespace wiper
