// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#include "autodiff/checkpoint.hpp"

#include <fstream>

#include "core/binary_io.hpp"

namespace wiper {

namespace {

constexpr std::string_view kMagic = "WIPR";

}  // namespace

template <std::floating_point T>
void write_checkpoint(std::ostream& out, const std::vector<NamedTensor<T>>& params) {
  binary::write_magic(out, kMagic);
  binary::write_le<std::uint32_t>(out, kCheckpointVersion);
  binary::write_le<std::uint32_t>(out, sizeof(T));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t e : tensor.shape()) binary::write_le<std::uint64_t>(out, e);
    for (T v : tensor.data()) {
      if constexpr (sizeof(T) == 8)
        binary::write_f64(out, v);
      else
        binary::write_f32(out, v);
    }
  }
  require(static_cast<bool>(out), ErrorCode::io, "checkpoint: write failed");
}

template <std::floating_point T>
std::vector<NamedTensor<T>> read_checkpoint(std::istream& in) {
  binary::expect_magic(in, kMagic, "WIPR checkpoint");
  const auto version = binary::read_le<std::uint32_t>(in, "version");
  require(version == kCheckpointVersion, ErrorCode::format,
          "checkpoint: unsupported version " + std::to_string(version));
  const auto width = binary::read_le<std::uint32_t>(in, "value width");
  require(width == 4 || width == 8, ErrorCode::format, "checkpoint: bad value width " + std::to_string(width));
  const auto count = binary::read_le<std::uint32_t>(in, "record count");

  std::vector<NamedTensor<T>> params;
  params.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto name_len = binary::read_le<std::uint32_t>(in, "name length");
    require(name_len <= 4096, ErrorCode::format, "checkpoint: implausible name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    require(in.gcount() == static_cast<std::streamsize>(name_len), ErrorCode::format, "checkpoint: truncated name");
    const auto rank = binary::read_le<std::uint32_t>(in, "rank");
    require(rank <= 8, ErrorCode::format, "checkpoint: implausible rank");
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(binary::read_le<std::uint64_t>(in, "extent"));
    const std::size_t n = shape_size(shape);
    require(n <= (std::size_t{1} << 32), ErrorCode::format, "checkpoint: implausible tensor size");
    std::vector<T> values(n);
    for (auto& v : values)
      v = width == 8 ? static_cast<T>(binary::read_f64(in, "value")) : static_cast<T>(binary::read_f32(in, "value"));
    params.push_back({std::move(name), Tensor<T>(std::move(shape), std::move(values))});
  }
  return params;
}

template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

template <std::floating_point T>
std::vector<NamedTensor<T>> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  return read_checkpoint<T>(in);
}

std::uint32_t checkpoint_value_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  binary::expect_magic(in, kMagic, "WIPR checkpoint");
  (void)binary::read_le<std::uint32_t>(in, "version");
  return binary::read_le<std::uint32_t>(in, "value width");
}

template void write_checkpoint(std::ostream&, const std::vector<NamedTensor<float>>&);
template void write_checkpoint(std::ostream&, const std::vector<NamedTensor<double>>&);
template std::vector<NamedTensor<float>> read_checkpoint(std::istream&);
template std::vector<NamedTensor<double>> read_checkpoint(std::istream&);
template void save_checkpoint(const std::filesystem::path&, const std::vector<NamedTensor<float>>&);
template void save_checkpoint(const std::filesystem::path&, const std::vector<NamedTensor<double>>&);
template std::vector<NamedTensor<float>> load_checkpoint(const std::filesystem::path&);
template std::vector<NamedTensor<double>> load_checkpoint(const std::filesystem::path&);

}  // namespace wiper
