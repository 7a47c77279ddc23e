// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// Two-level voxelization: a coarse grid, an exclusive prefix sum over its
// Boundary cells and one packed F^3 fine block per Boundary cell.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mrvox/voxel_core.hpp"

namespace mrvox {

/// offsets[v] = number of Boundary cells with flat index < v.
struct PrefixSumIndex {
  std::vector<std::uint32_t> offsets;
  std::uint32_t total = 0;
  friend bool operator==(const PrefixSumIndex&, const PrefixSumIndex&) = default;
};

/// Exclusive scan of 0/1 flags.
PrefixSumIndex exclusive_scan_flags(std::span<const std::uint8_t> flags);

PrefixSumIndex build_prefix_index(const VoxelGrid& grid);

struct MultiResGrid {
  VoxelGrid coarse;
  int fine_factor = 1;
  PrefixSumIndex index;
  /// total * F^3 cells; block b starts at b * F^3, local layout x fastest.
  std::vector<CellState> fine_cells;
  /// Same length as fine_cells when present, zero at non-Boundary cells.
  std::vector<Normal3f> fine_normals;
  bool inside_fill = false;

  std::size_t block_size() const {
    return std::size_t(fine_factor) * std::size_t(fine_factor) * std::size_t(fine_factor);
  }
  bool has_normals() const { return coarse.has_normals(); }
  std::size_t boundary_count() const { return index.total; }

  /// Fine block of the Boundary coarse cell with flat index `coarse_flat`.
  std::span<const CellState> block(std::size_t coarse_flat) const;

  /// Grid at the effective resolution (coarse dims x F) over the same box.
  GridSpec effective_spec() const { return GridSpec(coarse.dims().scaled(fine_factor), coarse.spec.box()); }

  /// Cells actually stored: coarse cells + total * F^3.
  std::size_t stored_cell_count() const { return coarse.cells.size() + fine_cells.size(); }

  /// Coarse flat indices of Boundary cells, ascending.
  std::vector<std::size_t> boundary_cells() const;
};

struct FineOptions {
  bool inside_fill = false;
  bool normals = true;
};

/// Refines every Boundary cell of `coarse` into F^3 fine cells, testing each
/// fine cell only against that coarse cell's triangle list. Remaining fine
/// cells are classified by ray parity when inside_fill is set, else Outside.
/// Throws OverflowedBufferError if the buffer overflowed.
MultiResGrid voxelize_fine(const TriangleMesh& mesh, const VoxelGrid& coarse, const TriangleBuffer& buffer,
                           int fine_factor, const FineOptions& options = {});

/// Full two-level pipeline over `box`: coarse classification with retry,
/// optional coarse fill, fine refinement.
MultiResGrid voxelize_multires(const TriangleMesh& mesh, const Aabb& box, Dims coarse_dims, int fine_factor,
                               const FineOptions& options = {});

/// Dense grid at the effective resolution: fine states under Boundary coarse
/// cells, the replicated coarse state elsewhere.
VoxelGrid flatten_to_dense(const MultiResGrid& grid);

inline constexpr std::uint32_t kMrvxVersion = 1;

/// MRVX container, little-endian; see README for the byte layout.
std::vector<std::byte> serialize(const MultiResGrid& grid);

/// Throws FormatError naming the offending section.
MultiResGrid deserialize(std::span<const std::byte> bytes);

}  // namespace mrvox
