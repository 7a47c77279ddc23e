// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include "mrvox/grid_io.hpp"

#include <fstream>
#include <optional>

#include <fmt/format.h>

#include "mrvox/byte_io.hpp"

namespace mrvox {

namespace {

constexpr std::uint32_t kDvoxFlagInsideFill = 1u << 1;

}  // namespace

std::vector<std::byte> serialize_dense(const VoxelGrid& grid, bool inside_fill) {
  ByteWriter w;
  w.put_tag("DVOX");
  w.put(kDvoxVersion);
  const Dims& d = grid.dims();
  w.put(std::uint32_t(d.nx));
  w.put(std::uint32_t(d.ny));
  w.put(std::uint32_t(d.nz));
  const Aabb& box = grid.spec.box();
  for (int a = 0; a < 3; ++a) w.put(box.min[a]);
  for (int a = 0; a < 3; ++a) w.put(box.max[a]);
  w.put(inside_fill ? kDvoxFlagInsideFill : 0u);
  for (auto c : grid.cells) w.put(static_cast<std::uint8_t>(c));
  return w.release();
}

VoxelGrid deserialize_dense(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  r.require(4, "magic");
  if (!r.tag_matches("DVOX")) throw FormatError("magic", "not a DVOX file");
  r.skip(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kDvoxVersion) throw FormatError("version", fmt::format("unsupported version {}", version));
  Dims dims;
  dims.nx = int(r.get<std::uint32_t>("header"));
  dims.ny = int(r.get<std::uint32_t>("header"));
  dims.nz = int(r.get<std::uint32_t>("header"));
  Aabb box;
  for (int a = 0; a < 3; ++a) box.min[a] = r.get<double>("header");
  for (int a = 0; a < 3; ++a) box.max[a] = r.get<double>("header");
  const auto flags = r.get<std::uint32_t>("header");
  if (flags & ~kDvoxFlagInsideFill) throw FormatError("header", "unknown flag bits");
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1 || dims.count() > (std::size_t{1} << 30)) {
    throw FormatError("header", "invalid dims");
  }
  std::optional<GridSpec> spec;
  try {
    spec.emplace(dims, box);
  } catch (const Error& e) {
    throw FormatError("header", e.what());
  }
  VoxelGrid grid(*spec);
  r.require(grid.cells.size(), "cells");
  for (auto& c : grid.cells) {
    const auto raw = r.get<std::uint8_t>("cells");
    if (raw > 2) throw FormatError("cells", fmt::format("invalid cell state {}", raw));
    c = static_cast<CellState>(raw);
  }
  if (r.remaining() != 0) throw FormatError("trailer", "unexpected trailing bytes");
  return grid;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot open {} for writing", tmp.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error(fmt::format("failed writing {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

MultiResGrid read_mrvx(const std::filesystem::path& path) { return deserialize(read_file_bytes(path)); }

VoxelGrid read_dvox(const std::filesystem::path& path) { return deserialize_dense(read_file_bytes(path)); }

VoxelGrid read_dense_view(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == kMrvxExtension) return flatten_to_dense(read_mrvx(path));
  if (ext == kDvoxExtension) return read_dvox(path);
  throw Error(fmt::format("{}: expected a {} or {} file", path.string(), kMrvxExtension, kDvoxExtension));
}

}  // namespace mrvox
