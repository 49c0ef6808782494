// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"

namespace wiper {

template <std::floating_point T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// WIPR checkpoint layout (all integers little-endian):
//   "WIPR" | u32 version | u32 value_bytes (4 or 8) | u32 record_count
//   record: u32 name_len | name (UTF-8) | u32 rank | rank x u64 extent | values
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <std::floating_point T>
void write_checkpoint(std::ostream& out, const std::vector<NamedTensor<T>>& params);

/// Values stored at the other width are converted to T.
template <std::floating_point T>
std::vector<NamedTensor<T>> read_checkpoint(std::istream& in);

template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& params);

template <std::floating_point T>
std::vector<NamedTensor<T>> load_checkpoint(const std::filesystem::path& path);

/// Reads only the header; returns 4 or 8.
std::uint32_t checkpoint_value_bytes(const std::filesystem::path& path);

}  // namespace wiper
