// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// Coarse-level voxelization: grid indexing, the 13-axis triangle/box
// separating-axis test, per-triangle boundary classification with per-voxel
// triangle lists, ray-parity inside fill and per-voxel normal averaging.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mrvox/geometry.hpp"
#include "mrvox/mesh_io.hpp"

namespace mrvox {

enum class CellState : std::uint8_t { Outside = 0, Inside = 1, Boundary = 2 };

struct Dims {
  int nx = 1;
  int ny = 1;
  int nz = 1;

  std::size_t count() const { return std::size_t(nx) * std::size_t(ny) * std::size_t(nz); }
  int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  Dims scaled(int factor) const { return {nx * factor, ny * factor, nz * factor}; }
  friend bool operator==(const Dims&, const Dims&) = default;
};

struct CellIndex {
  int i = 0;
  int j = 0;
  int k = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Grid dimensions over a box. Cells are half-open [lo, hi) per axis except
/// the last cell of each axis, which is closed.
class GridSpec {
 public:
  /// Throws Error unless every dim >= 1 and box.min < box.max componentwise.
  GridSpec(Dims dims, Aabb box);

  const Dims& dims() const { return dims_; }
  const Aabb& box() const { return box_; }
  std::size_t cell_count() const { return dims_.count(); }

  /// Coordinate of face `t` (0..dim) along `axis`. Face t at resolution R
  /// and face t*F at resolution R*F evaluate bitwise-identically, which keeps
  /// coarse and refined cell boxes consistent.
  double face(int axis, int t) const {
    return box_.min[axis] + box_.extent()[axis] * (double(t) / double(dims_[axis]));
  }
  Aabb cell_box(int i, int j, int k) const {
    return {{face(0, i), face(1, j), face(2, k)}, {face(0, i + 1), face(1, j + 1), face(2, k + 1)}};
  }
  Vec3 cell_center(int i, int j, int k) const {
    return cell_box(i, j, k).center();
  }
  Vec3 cell_size() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  Dims dims_;
  Aabb box_;
};

/// i = floor(N_x (x - x_min) / (x_max - x_min)) per axis, clamped to
/// [0, N-1]. Throws OutOfBoundsError when p lies strictly outside the box.
CellIndex point_to_cell(Vec3 p, const GridSpec& spec);

/// k*N_y*N_x + j*N_x + i. Throws IndexError for out-of-range components.
std::size_t flatten_index(int i, int j, int k, const Dims& dims);
inline std::size_t flatten_index(CellIndex c, const Dims& dims) { return flatten_index(c.i, c.j, c.k, dims); }
CellIndex unflatten_index(std::size_t flat, const Dims& dims);

/// Dense cell-state array, x fastest, then y, then z.
struct VoxelGrid {
  GridSpec spec;
  std::vector<CellState> cells;
  /// Per-cell normals, meaningful at Boundary cells only; empty when absent.
  std::vector<Normal3f> normals;

  explicit VoxelGrid(GridSpec s) : spec(s), cells(s.cell_count(), CellState::Outside) {}

  const Dims& dims() const { return spec.dims(); }
  CellState at(int i, int j, int k) const { return cells[flatten_index(i, j, k, dims())]; }
  bool has_normals() const { return !normals.empty(); }
  std::size_t count(CellState s) const;
};

/// Triangle-box overlap over the 13 separating axes (3 box normals, the
/// triangle normal, 9 edge x axis cross products). Touching counts as
/// overlapping; zero-area triangles behave as segments/points.
bool tri_box_intersect(const Triangle& tri, const Aabb& box);

/// Fixed-capacity per-voxel triangle lists filled by concurrent appends.
/// `counts` keeps incrementing past capacity so the caller learns how large a
/// buffer a re-run needs; only the first `capacity` entries are stored.
class TriangleBuffer {
 public:
  TriangleBuffer(std::size_t voxel_count, std::uint32_t capacity);

  std::uint32_t capacity() const { return capacity_; }
  std::size_t voxel_count() const { return counts_.size(); }
  bool overflowed() const { return overflowed_; }
  /// Largest per-voxel triangle count observed, including dropped appends.
  std::uint32_t max_count() const { return max_count_; }
  std::uint32_t count(std::size_t voxel) const { return counts_[voxel]; }

  /// Stored triangle indices of `voxel`, ascending after `finalize()`.
  std::span<const std::uint32_t> triangles(std::size_t voxel) const;

  /// Thread-safe append; any number of threads may call it concurrently.
  void append(std::size_t voxel, std::uint32_t triangle);

  /// Sorts each list and computes the overflow summary. Call once after all
  /// appends completed.
  void finalize();

 private:
  std::uint32_t capacity_;
  std::vector<std::uint32_t> counts_;
  std::vector<std::uint32_t> entries_;
  bool overflowed_ = false;
  std::uint32_t max_count_ = 0;
};

struct BoundaryClassification {
  VoxelGrid grid;
  TriangleBuffer buffer;
};

/// Per-triangle candidate cell range from the triangle's vertices, widened by
/// a sub-ulp-scale tolerance so a vertex sitting on a shared face also tests
/// the neighbouring (closed) cell.
struct CellRange {
  CellIndex lo;
  CellIndex hi;
};
CellRange candidate_range(const Triangle& tri, const GridSpec& spec);

/// Marks every cell that a triangle touches as Boundary and records the
/// triangle in that cell's list. Data-parallel over triangles. Requires
/// spec.box to contain the mesh. On overflow the result has
/// buffer.overflowed() set and buffer.max_count() reports the needed size.
BoundaryClassification classify_boundary(const TriangleMesh& mesh, const GridSpec& spec, std::uint32_t capacity);

inline constexpr std::uint32_t kDefaultBufferCapacity = 32;
inline constexpr int kMaxBufferRetries = 4;

/// classify_boundary with the re-run strategy: on overflow retry with
/// max(2 * capacity, observed max), at most `max_retries` times. Throws
/// OverflowedBufferError if the last attempt still overflows.
BoundaryClassification classify_boundary_with_retry(const TriangleMesh& mesh, const GridSpec& spec,
                                                    std::uint32_t capacity = kDefaultBufferCapacity,
                                                    int max_retries = kMaxBufferRetries);

/// +x ray parity point-in-mesh classifier at the cell centers of a grid.
/// Crossing lists are built once per (j, k) row.
class ParityClassifier {
 public:
  ParityClassifier(const TriangleMesh& mesh, const GridSpec& spec);

  /// True when the +x ray from the center of cell (i, j, k) crosses the
  /// triangle soup an odd number of times.
  bool inside(int i, int j, int k) const;

 private:
  GridSpec spec_;
  /// Sorted x coordinates of crossings for every row.
  std::vector<std::vector<double>> rows_;
};

/// Marks non-Boundary cells Inside (odd +x parity at the cell center) or
/// Outside. Boundary cells are untouched.
VoxelGrid fill_inside(VoxelGrid grid, const TriangleMesh& mesh);

/// Normalized mean of the unit normals of every triangle listed at each
/// Boundary cell; the zero vector when that mean has norm < 1e-12.
VoxelGrid average_normals(const TriangleMesh& mesh, const TriangleBuffer& buffer, VoxelGrid grid);

/// Mean of unit normals, normalized, zero for a degenerate mean. Shared by
/// the coarse and fine levels.
Normal3f average_unit_normals(const TriangleMesh& mesh, std::span<const std::uint32_t> triangles);

struct VoxelizeOptions {
  bool inside_fill = false;
  bool normals = true;
  std::uint32_t capacity = kDefaultBufferCapacity;
};

/// Single-level voxelization: boundary classification with retry, optional
/// parity fill and optional normals. Used for the dense and coarse grids.
VoxelGrid voxelize(const TriangleMesh& mesh, const GridSpec& spec, const VoxelizeOptions& options = {});

}  // namespace mrvox
