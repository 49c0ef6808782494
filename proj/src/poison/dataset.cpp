// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "poison/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "core/binary_io.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"

namespace wiper {

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::holdout: return "holdout";
    case Split::test: return "test";
  }
  return "train";
}

void Dataset::validate() const {
  require(height > 0 && width > 0 && channels > 0, ErrorCode::invalid_argument, "dataset: degenerate image dims");
  require(classes >= 1, ErrorCode::invalid_argument, "dataset: class count must be positive");
  require(pixels.size() == labels.size() * image_size(), ErrorCode::shape_mismatch,
          "dataset: pixel buffer does not match N*H*W*C");
  for (std::uint32_t label : labels)
    require(label < classes, ErrorCode::invalid_argument, "dataset: label " + std::to_string(label) + " out of range");
}

namespace {

// Intensity in [0, 1] of class `k`'s template at pixel (r, c).
double class_template(std::size_t k, std::size_t classes, double r, double c, double h, double w) {
  const double cy = (h - 1.0) / 2.0;
  const double cx = (w - 1.0) / 2.0;
  const double theta = std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
  // Distance from the oriented line through the centre.
  const double dist = std::abs(-(r - cy) * std::cos(theta) + (c - cx) * std::sin(theta));
  const double along = std::abs((r - cy) * std::sin(theta) + (c - cx) * std::cos(theta));
  const double half_len = 0.38 * std::min(h, w);
  const double bar = (dist <= 0.8 && along <= half_len) ? 1.0 : 0.0;

  const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
  const double radius = 0.3 * std::min(h, w);
  const double by = cy + radius * std::sin(phi);
  const double bx = cx + radius * std::cos(phi);
  const double d2 = (r - by) * (r - by) + (c - bx) * (c - bx);
  const double sigma = 0.1 * std::min(h, w);
  const double blob = std::exp(-d2 / (2.0 * sigma * sigma));
  return std::min(1.0, 0.65 * bar + 0.5 * blob);
}

constexpr double kBackground = 40.0;

std::uint8_t to_pixel(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

}  // namespace

Dataset gen_synthetic(const SyntheticSpec& spec, Split split) {
  require(spec.classes >= 2, ErrorCode::invalid_argument, "gen_synthetic: need at least 2 classes");
  require(spec.height >= 4 && spec.width >= 4 && spec.channels >= 1, ErrorCode::invalid_argument,
          "gen_synthetic: degenerate image dims");
  require(spec.per_class >= 1, ErrorCode::invalid_argument, "gen_synthetic: per_class must be positive");
  require(spec.noise >= 0.0 && spec.noise <= 255.0, ErrorCode::invalid_argument, "gen_synthetic: noise out of range");
  require(spec.contrast >= 0.0 && spec.contrast <= 215.0, ErrorCode::invalid_argument,
          "gen_synthetic: contrast out of range");

  Dataset ds;
  ds.height = spec.height;
  ds.width = spec.width;
  ds.channels = spec.channels;
  ds.classes = spec.classes;
  ds.split = split;
  const std::size_t n = spec.classes * spec.per_class;
  const std::size_t hw = spec.height * spec.width;

  std::vector<std::vector<double>> templates(spec.classes, std::vector<double>(hw));
  for (std::size_t k = 0; k < spec.classes; ++k)
    for (std::size_t r = 0; r < spec.height; ++r)
      for (std::size_t c = 0; c < spec.width; ++c)
        templates[k][r * spec.width + c] =
            kBackground + spec.contrast * class_template(k, spec.classes, static_cast<double>(r), static_cast<double>(c),
                                                      static_cast<double>(spec.height), static_cast<double>(spec.width));

  Rng rng(spec.seed);
  ds.labels.resize(n);
  ds.pixels.resize(n * ds.image_size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % spec.classes;
    ds.labels[i] = static_cast<std::uint32_t>(k);
    std::uint8_t* px = ds.pixels.data() + i * ds.image_size();
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        const double noise = spec.noise > 0.0 ? rng.uniform(-spec.noise, spec.noise) : 0.0;
        px[p * spec.channels + ch] = to_pixel(templates[k][p] + noise);
      }
  }
  return ds;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.height = ds.height;
  out.width = ds.width;
  out.channels = ds.channels;
  out.classes = ds.classes;
  out.split = ds.split;
  out.labels.reserve(indices.size());
  out.pixels.reserve(indices.size() * ds.image_size());
  for (std::size_t i : indices) {
    require(i < ds.size(), ErrorCode::invalid_argument, "subset: index out of range");
    out.labels.push_back(ds.labels[i]);
    auto img = ds.image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
  }
  return out;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  ds.validate();
  binary::write_magic(out, "DSK1");
  binary::write_le<std::uint32_t>(out, kDatasetVersion);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.size()));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.height));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.width));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.channels));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.classes));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    binary::write_le<std::uint32_t>(out, ds.labels[i]);
    auto img = ds.image(i);
    out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  }
  require(static_cast<bool>(out), ErrorCode::io, "dataset: write failed");
}

Dataset read_dataset(std::istream& in, Split split) {
  binary::expect_magic(in, "DSK1", "DSK1 dataset");
  const auto version = binary::read_le<std::uint32_t>(in, "version");
  require(version == kDatasetVersion, ErrorCode::format, "dataset: unsupported version " + std::to_string(version));
  Dataset ds;
  ds.split = split;
  const auto n = binary::read_le<std::uint32_t>(in, "N");
  ds.height = binary::read_le<std::uint32_t>(in, "H");
  ds.width = binary::read_le<std::uint32_t>(in, "W");
  ds.channels = binary::read_le<std::uint32_t>(in, "C");
  ds.classes = binary::read_le<std::uint32_t>(in, "classes");
  require(ds.image_size() > 0 && ds.image_size() <= (1u << 24), ErrorCode::format, "dataset: implausible image dims");
  ds.labels.resize(n);
  ds.pixels.resize(static_cast<std::size_t>(n) * ds.image_size());
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = binary::read_le<std::uint32_t>(in, "label");
    in.read(reinterpret_cast<char*>(ds.pixels.data() + i * ds.image_size()),
            static_cast<std::streamsize>(ds.image_size()));
    require(in.gcount() == static_cast<std::streamsize>(ds.image_size()), ErrorCode::format,
            "dataset: truncated pixel record");
  }
  ds.validate();
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open " + path.string() + " for writing");
  write_dataset(out, ds);
}

Dataset load_dataset(const std::filesystem::path& path, Split split) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  return read_dataset(in, split);
}

void export_csv(std::ostream& out, const Dataset& ds) {
  out << "label";
  for (std::size_t p = 0; p < ds.image_size(); ++p) out << ",p" << p;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (std::uint8_t v : ds.image(i)) out << ',' << static_cast<unsigned>(v);
    out << '\n';
  }
}

Dataset import_csv(std::istream& in, std::size_t height, std::size_t width, std::size_t channels,
                   std::size_t classes) {
  Dataset ds;
  ds.height = height;
  ds.width = width;
  ds.channels = channels;
  ds.classes = classes;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::format, "csv: missing header");
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<long> values;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stol(cell));
      } catch (const std::exception&) {
        fail(ErrorCode::format, "csv: bad number on row " + std::to_string(row));
      }
    }
    require(values.size() == 1 + ds.image_size(), ErrorCode::format,
            "csv: row " + std::to_string(row) + " has wrong column count");
    require(values[0] >= 0, ErrorCode::format, "csv: negative label");
    ds.labels.push_back(static_cast<std::uint32_t>(values[0]));
    for (std::size_t p = 1; p < values.size(); ++p) {
      require(values[p] >= 0 && values[p] <= 255, ErrorCode::format, "csv: pixel out of range");
      ds.pixels.push_back(static_cast<std::uint8_t>(values[p]));
    }
  }
  ds.validate();
  return ds;
}

}  // namespace wiper
