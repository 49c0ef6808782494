// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wiper {

enum class Split { train, holdout, test };

std::string_view split_name(Split split);

/// Mutable view of one H x W x C u8 image (row-major, channels innermost).
struct ImageRef {
  std::span<std::uint8_t> pixels;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::uint8_t& at(std::size_t row, std::size_t col, std::size_t ch) const {
    return pixels[(row * width + col) * channels + ch];
  }
};

/// N images of H x W x C u8 pixels plus class labels.
struct Dataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t classes = 0;
  Split split = Split::train;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_size() const noexcept { return height * width * channels; }
  ImageRef image(std::size_t i) {
    return {std::span(pixels).subspan(i * image_size(), image_size()), height, width, channels};
  }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return std::span(pixels).subspan(i * image_size(), image_size());
  }
  /// Checks label range and buffer sizes; throws on violation.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t per_class = 100;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  /// Uniform noise half-width in pixel units (25 = 25/255 of full scale).
  double noise = 25.0;
  /// Template peak above the background level of 40.
  double contrast = 180.0;
  std::uint64_t seed = 1;
};

/// Each class is a fixed geometric pattern (an oriented bar plus a blob whose
/// position depends on the class id) with i.i.d. uniform pixel noise on top.
/// Samples are ordered class-interleaved: label(i) = i % classes.
Dataset gen_synthetic(const SyntheticSpec& spec, Split split = Split::train);

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

// DSK1 layout (little-endian): "DSK1" | u32 version | u32 N | u32 H | u32 W |
// u32 C | u32 classes | N x (u32 label, H*W*C u8 pixels)
inline constexpr std::uint32_t kDatasetVersion = 1;

void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in, Split split = Split::train);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path, Split split = Split::train);

/// CSV debug format: header "label,p0,p1,...", one row per sample.
void export_csv(std::ostream& out, const Dataset& ds);
Dataset import_csv(std::istream& in, std::size_t height, std::size_t width, std::size_t channels,
                   std::size_t classes);

}  // namespace wiper
