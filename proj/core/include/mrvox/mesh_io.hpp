// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// Triangle mesh ingestion: ASCII OFF (including the ModelNet header quirk)
// and ASCII/binary STL.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrvox/geometry.hpp"

namespace mrvox {

/// Indexed triangle soup. Vertices are never welded.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  /// Optional per-triangle unit normals; empty when absent.
  std::vector<Vec3> triangle_normals;

  std::size_t triangle_count() const { return triangles.size(); }
  bool has_normals() const { return !triangle_normals.empty(); }

  Triangle triangle(std::size_t t) const {
    const auto& idx = triangles[t];
    return {vertices[idx[0]], vertices[idx[1]], vertices[idx[2]]};
  }

  /// Unit normal of triangle `t`: the stored normal when present, otherwise
  /// the normalized winding cross product. nullopt for zero-area triangles
  /// without a stored normal.
  std::optional<Vec3> unit_normal(std::size_t t) const;

  /// Throws ParseError if an index is out of range, a triangle repeats a
  /// vertex, or a stored normal is not unit length.
  void validate() const;
};

TriangleMesh parse_off(std::span<const std::byte> bytes);
TriangleMesh parse_off(std::string_view text);

/// ASCII when the payload starts with "solid" and parses as ASCII, binary otherwise.
TriangleMesh parse_stl(std::span<const std::byte> bytes);

/// Dispatches on the file extension (.off / .stl, case-insensitive).
TriangleMesh load_mesh(const std::filesystem::path& path);

/// Writes ASCII OFF with round-trip exact (max_digits10) coordinates.
std::string write_off(const TriangleMesh& mesh);

inline constexpr double kDefaultAabbPad = 0.02;

/// Bounding box of all vertices, each side pushed out by pad x extent of
/// that axis. Zero-extent axes use pad x the largest extent instead.
Aabb compute_aabb(const TriangleMesh& mesh, double pad_fraction = kDefaultAabbPad);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

}  // namespace mrvox
