// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include "mrvox/voxel_core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include <fmt/format.h>

#include "mrvox/error.hpp"
#include "mrvox/parallel.hpp"

namespace mrvox {

GridSpec::GridSpec(Dims dims, Aabb box) : dims_(dims), box_(box) {
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
    throw Error(fmt::format("grid dims must be >= 1, got ({}, {}, {})", dims.nx, dims.ny, dims.nz));
  }
  for (int a = 0; a < 3; ++a) {
    if (!(box.min[a] < box.max[a])) throw Error(fmt::format("grid box is empty along axis {}", a));
  }
}

Vec3 GridSpec::cell_size() const {
  const Vec3 e = box_.extent();
  return {e.x / dims_.nx, e.y / dims_.ny, e.z / dims_.nz};
}

std::size_t VoxelGrid::count(CellState s) const { return std::size_t(std::count(cells.begin(), cells.end(), s)); }

CellIndex point_to_cell(Vec3 p, const GridSpec& spec) {
  const Aabb& box = spec.box();
  if (!box.contains(p)) {
    throw OutOfBoundsError(fmt::format("point ({}, {}, {}) lies outside the grid box", p.x, p.y, p.z));
  }
  int idx[3];
  for (int a = 0; a < 3; ++a) {
    const int n = spec.dims()[a];
    const double t = n * (p[a] - box.min[a]) / (box.max[a] - box.min[a]);
    idx[a] = std::clamp(static_cast<int>(std::floor(t)), 0, n - 1);
  }
  return {idx[0], idx[1], idx[2]};
}

std::size_t flatten_index(int i, int j, int k, const Dims& dims) {
  if (i < 0 || i >= dims.nx || j < 0 || j >= dims.ny || k < 0 || k >= dims.nz) {
    throw IndexError(fmt::format("cell ({}, {}, {}) outside dims ({}, {}, {})", i, j, k, dims.nx, dims.ny, dims.nz));
  }
  return std::size_t(k) * std::size_t(dims.ny) * std::size_t(dims.nx) + std::size_t(j) * std::size_t(dims.nx) +
         std::size_t(i);
}

CellIndex unflatten_index(std::size_t flat, const Dims& dims) {
  if (flat >= dims.count()) throw IndexError(fmt::format("flat index {} >= {}", flat, dims.count()));
  const auto plane = std::size_t(dims.nx) * std::size_t(dims.ny);
  return {int(flat % std::size_t(dims.nx)), int((flat % plane) / std::size_t(dims.nx)), int(flat / plane)};
}

bool tri_box_intersect(const Triangle& tri, const Aabb& box) {
  const Vec3 c = box.center();
  const Vec3 h = box.extent() * 0.5;
  const Vec3 v0 = tri[0] - c;
  const Vec3 v1 = tri[1] - c;
  const Vec3 v2 = tri[2] - c;

  // Box face normals.
  for (int a = 0; a < 3; ++a) {
    const double lo = std::min({v0[a], v1[a], v2[a]});
    const double hi = std::max({v0[a], v1[a], v2[a]});
    if (lo > h[a] || hi < -h[a]) return false;
  }

  const Vec3 e0 = v1 - v0;
  const Vec3 e1 = v2 - v1;
  const Vec3 e2 = v0 - v2;

  // Triangle normal: the triangle projects to the single value n.v0.
  const Vec3 n = cross(e0, e1);
  const double plane = dot(n, v0);
  const double plane_radius = h.x * std::abs(n.x) + h.y * std::abs(n.y) + h.z * std::abs(n.z);
  if (plane > plane_radius || plane < -plane_radius) return false;

  // Edge x box-axis cross products.
  const Vec3 edges[3] = {e0, e1, e2};
  const Vec3 units[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (const Vec3& e : edges) {
    for (const Vec3& u : units) {
      const Vec3 axis = cross(u, e);
      const double p0 = dot(axis, v0);
      const double p1 = dot(axis, v1);
      const double p2 = dot(axis, v2);
      const double radius = h.x * std::abs(axis.x) + h.y * std::abs(axis.y) + h.z * std::abs(axis.z);
      if (std::min({p0, p1, p2}) > radius || std::max({p0, p1, p2}) < -radius) return false;
    }
  }
  return true;
}

TriangleBuffer::TriangleBuffer(std::size_t voxel_count, std::uint32_t capacity)
    : capacity_(capacity), counts_(voxel_count, 0), entries_(voxel_count * capacity, 0) {
  if (capacity == 0) throw Error("triangle buffer capacity must be positive");
}

std::span<const std::uint32_t> TriangleBuffer::triangles(std::size_t voxel) const {
  const auto n = std::min(counts_[voxel], capacity_);
  return {entries_.data() + voxel * capacity_, n};
}

void TriangleBuffer::append(std::size_t voxel, std::uint32_t triangle) {
  const auto slot = std::atomic_ref<std::uint32_t>(counts_[voxel]).fetch_add(1, std::memory_order_relaxed);
  if (slot < capacity_) entries_[voxel * capacity_ + slot] = triangle;
}

void TriangleBuffer::finalize() {
  max_count_ = 0;
  for (std::size_t v = 0; v < counts_.size(); ++v) {
    max_count_ = std::max(max_count_, counts_[v]);
    const auto n = std::min(counts_[v], capacity_);
    auto* first = entries_.data() + v * capacity_;
    std::sort(first, first + n);
  }
  overflowed_ = max_count_ > capacity_;
}

CellRange candidate_range(const Triangle& tri, const GridSpec& spec) {
  // Tolerance in cell units; far above rounding noise, far below a cell.
  constexpr double kTol = 1e-6;
  int lo[3];
  int hi[3];
  const Aabb& box = spec.box();
  for (int a = 0; a < 3; ++a) {
    const int n = spec.dims()[a];
    const double scale = n / (box.max[a] - box.min[a]);
    const double tmin = (std::min({tri[0][a], tri[1][a], tri[2][a]}) - box.min[a]) * scale;
    const double tmax = (std::max({tri[0][a], tri[1][a], tri[2][a]}) - box.min[a]) * scale;
    lo[a] = std::clamp(static_cast<int>(std::floor(tmin - kTol)), 0, n - 1);
    hi[a] = std::clamp(static_cast<int>(std::floor(tmax + kTol)), 0, n - 1);
  }
  return {{lo[0], lo[1], lo[2]}, {hi[0], hi[1], hi[2]}};
}

BoundaryClassification classify_boundary(const TriangleMesh& mesh, const GridSpec& spec, std::uint32_t capacity) {
  const Aabb& box = spec.box();
  for (const auto& v : mesh.vertices) {
    if (!box.contains(v)) throw OutOfBoundsError("mesh vertex lies outside the grid box");
  }
  BoundaryClassification out{VoxelGrid(spec), TriangleBuffer(spec.cell_count(), capacity)};
  const Dims& dims = spec.dims();

  parallel_for(
      mesh.triangle_count(),
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
          const Triangle tri = mesh.triangle(t);
          const CellRange r = candidate_range(tri, spec);
          for (int i = r.lo.i; i <= r.hi.i; ++i) {
            for (int j = r.lo.j; j <= r.hi.j; ++j) {
              for (int k = r.lo.k; k <= r.hi.k; ++k) {
                if (tri_box_intersect(tri, spec.cell_box(i, j, k))) {
                  out.buffer.append(flatten_index(i, j, k, dims), static_cast<std::uint32_t>(t));
                }
              }
            }
          }
        }
      },
      64);

  out.buffer.finalize();
  for (std::size_t v = 0; v < out.grid.cells.size(); ++v) {
    if (out.buffer.count(v) > 0) out.grid.cells[v] = CellState::Boundary;
  }
  return out;
}

BoundaryClassification classify_boundary_with_retry(const TriangleMesh& mesh, const GridSpec& spec,
                                                    std::uint32_t capacity, int max_retries) {
  auto result = classify_boundary(mesh, spec, capacity);
  for (int attempt = 0; attempt < max_retries && result.buffer.overflowed(); ++attempt) {
    capacity = std::max(capacity * 2, result.buffer.max_count());
    result = classify_boundary(mesh, spec, capacity);
  }
  if (result.buffer.overflowed()) {
    throw OverflowedBufferError(fmt::format("triangle buffer still overflows after {} retries (capacity {}, need {})",
                                            max_retries, capacity, result.buffer.max_count()));
  }
  return result;
}

namespace {

// Projection of a triangle onto the yz plane with everything needed to
// intersect an x-parallel ray.
struct ProjectedTriangle {
  Vec3 a, b, c;
  double area;  // signed double area in yz
  double ymin, ymax, zmin, zmax;
};

enum class RayHit { Miss, Hit, Ambiguous };

RayHit ray_crossing(const ProjectedTriangle& t, double py, double pz, double edge_tol, double& x_out) {
  auto edge = [](const Vec3& p, const Vec3& q, double y, double z) {
    return (q.y - p.y) * (z - p.z) - (q.z - p.z) * (y - p.y);
  };
  const double w0 = edge(t.b, t.c, py, pz);
  const double w1 = edge(t.c, t.a, py, pz);
  const double w2 = edge(t.a, t.b, py, pz);
  auto length = [](const Vec3& p, const Vec3& q) { return std::hypot(q.y - p.y, q.z - p.z); };
  const double d0 = std::abs(w0) / length(t.b, t.c);
  const double d1 = std::abs(w1) / length(t.c, t.a);
  const double d2 = std::abs(w2) / length(t.a, t.b);
  if (std::min({d0, d1, d2}) <= edge_tol) return RayHit::Ambiguous;
  const bool inside = t.area > 0 ? (w0 > 0 && w1 > 0 && w2 > 0) : (w0 < 0 && w1 < 0 && w2 < 0);
  if (!inside) return RayHit::Miss;
  x_out = (w0 * t.a.x + w1 * t.b.x + w2 * t.c.x) / t.area;
  return RayHit::Hit;
}

}  // namespace

ParityClassifier::ParityClassifier(const TriangleMesh& mesh, const GridSpec& spec)
    : spec_(spec), rows_(std::size_t(spec.dims().ny) * std::size_t(spec.dims().nz)) {
  const Dims& dims = spec.dims();
  const Vec3 cell = spec.cell_size();
  const double cell_scale = std::min(cell.y, cell.z);
  const double edge_tol = 1e-9 * cell_scale;

  std::vector<ProjectedTriangle> tris;
  tris.reserve(mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const Triangle v = mesh.triangle(t);
    ProjectedTriangle p{v[0], v[1], v[2], 0, 0, 0, 0, 0};
    p.area = (v[1].y - v[0].y) * (v[2].z - v[0].z) - (v[1].z - v[0].z) * (v[2].y - v[0].y);
    if (p.area == 0.0) continue;  // parallel to the ray
    p.ymin = std::min({v[0].y, v[1].y, v[2].y});
    p.ymax = std::max({v[0].y, v[1].y, v[2].y});
    p.zmin = std::min({v[0].z, v[1].z, v[2].z});
    p.zmax = std::max({v[0].z, v[1].z, v[2].z});
    tris.push_back(p);
  }

  // Candidate triangles per row by yz bounding box, widened so a row whose
  // perturbed origin moves slightly still sees every nearby triangle.
  std::vector<std::vector<std::uint32_t>> candidates(rows_.size());
  const double margin = 1e-3 * cell_scale;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto& p = tris[t];
    const int j0 = std::max(0, int(std::floor((p.ymin - margin - spec.box().min.y) / cell.y - 0.5)));
    const int j1 = std::min(dims.ny - 1, int(std::ceil((p.ymax + margin - spec.box().min.y) / cell.y - 0.5)));
    const int k0 = std::max(0, int(std::floor((p.zmin - margin - spec.box().min.z) / cell.z - 0.5)));
    const int k1 = std::min(dims.nz - 1, int(std::ceil((p.zmax + margin - spec.box().min.z) / cell.z - 0.5)));
    for (int k = k0; k <= k1; ++k) {
      for (int j = j0; j <= j1; ++j) candidates[std::size_t(k) * dims.ny + j].push_back(std::uint32_t(t));
    }
  }

  parallel_for(rows_.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      const int j = int(row % std::size_t(dims.ny));
      const int k = int(row / std::size_t(dims.ny));
      const Vec3 center = spec.cell_center(0, j, k);
      // Deterministic origin shift when the ray grazes an edge; the second
      // component uses an irrational ratio so repeated shifts do not realign.
      constexpr int kMaxShifts = 16;
      for (int shift = 0; shift <= kMaxShifts; ++shift) {
        const double offset = 1e-7 * cell_scale * shift;
        const double py = center.y + offset;
        const double pz = center.z + offset * 0.6180339887498949;
        auto& xs = rows_[row];
        xs.clear();
        bool ambiguous = false;
        for (auto t : candidates[row]) {
          double x = 0;
          const RayHit hit = ray_crossing(tris[t], py, pz, edge_tol, x);
          if (hit == RayHit::Ambiguous) {
            ambiguous = true;
            break;
          }
          if (hit == RayHit::Hit) xs.push_back(x);
        }
        if (!ambiguous || shift == kMaxShifts) {
          if (ambiguous) {
            // Accept a best-effort count: treat near-edge hits as misses.
            xs.clear();
            for (auto t : candidates[row]) {
              double x = 0;
              if (ray_crossing(tris[t], py, pz, -1.0, x) == RayHit::Hit) xs.push_back(x);
            }
          }
          std::sort(xs.begin(), xs.end());
          break;
        }
      }
    }
  });
}

bool ParityClassifier::inside(int i, int j, int k) const {
  const Dims& dims = spec_.dims();
  const auto& xs = rows_[std::size_t(k) * dims.ny + j];
  const double x = spec_.cell_center(i, j, k).x;
  const auto after = xs.end() - std::upper_bound(xs.begin(), xs.end(), x);
  return (after % 2) == 1;
}

VoxelGrid fill_inside(VoxelGrid grid, const TriangleMesh& mesh) {
  if (grid.count(CellState::Boundary) == grid.cells.size()) return grid;
  const ParityClassifier parity(mesh, grid.spec);
  const Dims& dims = grid.dims();
  for (int k = 0; k < dims.nz; ++k) {
    for (int j = 0; j < dims.ny; ++j) {
      for (int i = 0; i < dims.nx; ++i) {
        auto& cell = grid.cells[flatten_index(i, j, k, dims)];
        if (cell == CellState::Boundary) continue;
        cell = parity.inside(i, j, k) ? CellState::Inside : CellState::Outside;
      }
    }
  }
  return grid;
}

Normal3f average_unit_normals(const TriangleMesh& mesh, std::span<const std::uint32_t> triangles) {
  Vec3 sum{};
  std::size_t used = 0;
  for (auto t : triangles) {
    if (auto n = mesh.unit_normal(t)) {
      sum = sum + *n;
      ++used;
    }
  }
  if (used == 0) return {0.f, 0.f, 0.f};
  const Vec3 mean = sum * (1.0 / double(used));
  const double len = norm(mean);
  if (len < 1e-12) return {0.f, 0.f, 0.f};
  return {float(mean.x / len), float(mean.y / len), float(mean.z / len)};
}

VoxelGrid average_normals(const TriangleMesh& mesh, const TriangleBuffer& buffer, VoxelGrid grid) {
  if (buffer.voxel_count() != grid.cells.size()) throw Error("triangle buffer does not match the grid");
  grid.normals.assign(grid.cells.size(), Normal3f{0.f, 0.f, 0.f});
  for (std::size_t v = 0; v < grid.cells.size(); ++v) {
    if (grid.cells[v] == CellState::Boundary) grid.normals[v] = average_unit_normals(mesh, buffer.triangles(v));
  }
  return grid;
}

VoxelGrid voxelize(const TriangleMesh& mesh, const GridSpec& spec, const VoxelizeOptions& options) {
  auto boundary = classify_boundary_with_retry(mesh, spec, options.capacity);
  VoxelGrid grid = std::move(boundary.grid);
  if (options.inside_fill) grid = fill_inside(std::move(grid), mesh);
  if (options.normals) grid = average_normals(mesh, boundary.buffer, std::move(grid));
  return grid;
}

}  // namespace mrvox
