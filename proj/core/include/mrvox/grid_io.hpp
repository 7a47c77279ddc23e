// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// Dense grid container (DVOX) and file helpers shared by the pipeline.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mrvox/multires.hpp"

namespace mrvox {

inline constexpr std::uint32_t kDvoxVersion = 1;
inline constexpr const char* kMrvxExtension = ".mrvx";
inline constexpr const char* kDvoxExtension = ".dvox";

/// DVOX: "DVOX", u32 version, u32 nx ny nz, f64 min xyz, f64 max xyz,
/// u32 flags (bit 1: inside fill), then nx*ny*nz u8 cell states.
std::vector<std::byte> serialize_dense(const VoxelGrid& grid, bool inside_fill = false);
VoxelGrid deserialize_dense(std::span<const std::byte> bytes);

/// Writes through a temporary sibling and renames it into place.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

MultiResGrid read_mrvx(const std::filesystem::path& path);
VoxelGrid read_dvox(const std::filesystem::path& path);

/// Dense view of an MRVX (flattened) or DVOX file, chosen by extension.
VoxelGrid read_dense_view(const std::filesystem::path& path);

}  // namespace mrvox
