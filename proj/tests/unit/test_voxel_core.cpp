// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mrvox/parallel.hpp"
#include "mrvox/voxel_core.hpp"
#include "oracles.hpp"

using namespace mrvox;
using mrvox::oracle::naive_tri_box;

namespace {

const Aabb kUnit{{0, 0, 0}, {1, 1, 1}};

std::vector<std::uint8_t> boundary_flags(const VoxelGrid& g) {
  std::vector<std::uint8_t> out(g.cells.size());
  for (std::size_t v = 0; v < g.cells.size(); ++v) out[v] = g.cells[v] == CellState::Boundary;
  return out;
}

Triangle random_triangle(Rng& rng, double lo, double hi) {
  return {Vec3{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)},
          Vec3{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)},
          Vec3{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)}};
}

}  // namespace

TEST(PointToCell, Examples) {
  const GridSpec spec({4, 4, 4}, kUnit);
  EXPECT_EQ(point_to_cell({0.6, 0.1, 0.9}, spec), (CellIndex{2, 0, 3}));
  EXPECT_EQ(point_to_cell({1, 1, 1}, spec), (CellIndex{3, 3, 3}));
  EXPECT_EQ(point_to_cell({0, 0, 0}, spec), (CellIndex{0, 0, 0}));
  EXPECT_THROW(point_to_cell({1.0001, 0.5, 0.5}, spec), OutOfBoundsError);
  EXPECT_THROW(point_to_cell({0.5, -1e-9, 0.5}, spec), OutOfBoundsError);
}

TEST(FlattenIndex, Examples) {
  EXPECT_EQ(flatten_index(2, 0, 3, Dims{4, 4, 4}), 50u);
  EXPECT_EQ(flatten_index(0, 0, 0, Dims{4, 4, 4}), 0u);
  EXPECT_EQ(flatten_index(1, 2, 3, Dims{2, 3, 4}), 23u);
  EXPECT_THROW(flatten_index(2, 0, 0, Dims{2, 3, 4}), IndexError);
  EXPECT_THROW(flatten_index(0, -1, 0, Dims{2, 3, 4}), IndexError);
}

TEST(FlattenIndex, ExhaustiveBijectionUpTo8) {
  for (int nx = 1; nx <= 8; ++nx) {
    for (int ny = 1; ny <= 8; ++ny) {
      for (int nz = 1; nz <= 8; ++nz) {
        const Dims d{nx, ny, nz};
        std::vector<std::uint8_t> seen(d.count(), 0);
        for (int k = 0; k < nz; ++k) {
          for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
              const auto f = flatten_index(i, j, k, d);
              ASSERT_LT(f, d.count());
              ASSERT_EQ(seen[f], 0);
              seen[f] = 1;
              ASSERT_EQ(unflatten_index(f, d), (CellIndex{i, j, k}));
            }
          }
        }
      }
    }
  }
}

TEST(GridSpec, RejectsBadInput) {
  EXPECT_THROW(GridSpec({0, 1, 1}, kUnit), Error);
  EXPECT_THROW(GridSpec({1, 1, 1}, Aabb{{0, 0, 0}, {1, 0, 1}}), Error);
}

TEST(GridSpec, CoarseAndRefinedFacesAgreeBitwise) {
  const GridSpec coarse({5, 7, 3}, Aabb{{-0.3, 0.1, 2.0}, {0.77, 1.9, 3.3}});
  const GridSpec fine({20, 28, 12}, coarse.box());
  for (int a = 0; a < 3; ++a) {
    for (int t = 0; t <= coarse.dims()[a]; ++t) EXPECT_EQ(coarse.face(a, t), fine.face(a, 4 * t));
  }
}

TEST(TriBox, ContainedTriangle) {
  EXPECT_TRUE(tri_box_intersect({Vec3{0.2, 0.2, 0.2}, Vec3{0.8, 0.3, 0.4}, Vec3{0.5, 0.7, 0.6}}, kUnit));
}

TEST(TriBox, SeparatedByFaceNormal) {
  EXPECT_FALSE(tri_box_intersect({Vec3{2.5, 0, 0}, Vec3{3, 1, 0}, Vec3{2.2, 0, 1}}, kUnit));
}

TEST(TriBox, PlaneSlicingBoxWithNoVertexInside) {
  const Triangle big{Vec3{-10, -10, 0.5}, Vec3{10, -10, 0.5}, Vec3{0, 10, 0.5}};
  // Sampling oracle first: some point of the triangle is inside the box.
  Rng rng(1);
  bool sampled_inside = false;
  for (int s = 0; s < 20000 && !sampled_inside; ++s) {
    sampled_inside = oracle::point_in_box(oracle::sample_on_triangle(big, rng), kUnit);
  }
  ASSERT_TRUE(sampled_inside);
  EXPECT_TRUE(tri_box_intersect(big, kUnit));
}

TEST(TriBox, TouchingCountsAsIntersecting) {
  EXPECT_TRUE(tri_box_intersect({Vec3{1, 0, 0}, Vec3{2, 0, 0}, Vec3{2, 1, 0}}, kUnit));   // shares a vertex
  EXPECT_TRUE(tri_box_intersect({Vec3{1, 0.2, 0.2}, Vec3{1, 0.8, 0.2}, Vec3{1, 0.5, 0.9}}, kUnit));  // on a face
  EXPECT_FALSE(tri_box_intersect({Vec3{1 + 1e-9, 0.2, 0.2}, Vec3{2, 0.8, 0.2}, Vec3{2, 0.5, 0.9}}, kUnit));
}

TEST(TriBox, DegenerateTriangles) {
  EXPECT_TRUE(tri_box_intersect({Vec3{-1, 0.5, 0.5}, Vec3{2, 0.5, 0.5}, Vec3{2, 0.5, 0.5}}, kUnit));  // segment
  EXPECT_TRUE(tri_box_intersect({Vec3{0.5, 0.5, 0.5}, Vec3{0.5, 0.5, 0.5}, Vec3{0.5, 0.5, 0.5}}, kUnit));  // point
  EXPECT_FALSE(tri_box_intersect({Vec3{-1, 2, 0.5}, Vec3{2, 2, 0.5}, Vec3{0.5, 2, 0.5}}, kUnit));
  // Segment passing diagonally near, but outside, a box corner.
  EXPECT_FALSE(tri_box_intersect({Vec3{1.6, 0, 0.5}, Vec3{0, 1.6, 0.5}, Vec3{0, 1.6, 0.5}}, Aabb{{0, 0, 0}, {0.7, 0.7, 1}}));
}

TEST(TriBox, AgreesWithNaiveProjectionOracle) {
  Rng rng(42);
  int disagreements = 0;
  for (int n = 0; n < 20000; ++n) {
    const auto tri = random_triangle(rng, -1.0, 2.0);
    const Vec3 lo{rng.uniform(-0.5, 1.0), rng.uniform(-0.5, 1.0), rng.uniform(-0.5, 1.0)};
    const Aabb box{lo, lo + Vec3{rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0)}};
    disagreements += tri_box_intersect(tri, box) != naive_tri_box(tri, box);
  }
  EXPECT_EQ(disagreements, 0);
}

TEST(TriBox, SamplingSoundnessAndTranslation) {
  Rng rng(3);
  for (int n = 0; n < 2000; ++n) {
    const auto tri = random_triangle(rng, -1.0, 2.0);
    const Vec3 lo{rng.uniform(-0.5, 1.0), rng.uniform(-0.5, 1.0), rng.uniform(-0.5, 1.0)};
    const Aabb box{lo, lo + Vec3{rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0)}};
    const bool sat = tri_box_intersect(tri, box);
    for (int s = 0; s < 200 && !sat; ++s) ASSERT_FALSE(oracle::point_in_box(oracle::sample_on_triangle(tri, rng), box));
    const Vec3 shift{rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-8, 8)};
    const Triangle moved{tri[0] + shift, tri[1] + shift, tri[2] + shift};
    ASSERT_EQ(sat, tri_box_intersect(moved, Aabb{box.min + shift, box.max + shift}));
  }
}

TEST(ClassifyBoundary, CubeShellTwoCubedAllBoundary) {
  const auto cube = oracle::unit_cube();
  const GridSpec spec({2, 2, 2}, compute_aabb(cube));
  const auto res = classify_boundary(cube, spec, 32);
  EXPECT_EQ(res.grid.count(CellState::Boundary), 8u);
  EXPECT_EQ(boundary_flags(res.grid), oracle::brute_force_boundary(cube, spec));
}

TEST(ClassifyBoundary, TinyTriangleInOneCell) {
  TriangleMesh m;
  m.vertices = {{0.30, 0.30, 0.30}, {0.32, 0.30, 0.30}, {0.30, 0.32, 0.31}};
  m.triangles = {{0, 1, 2}};
  const GridSpec spec({4, 4, 4}, kUnit);
  const auto res = classify_boundary(m, spec, 32);
  ASSERT_EQ(res.grid.count(CellState::Boundary), 1u);
  const auto v = flatten_index(1, 1, 1, spec.dims());
  EXPECT_EQ(res.grid.cells[v], CellState::Boundary);
  ASSERT_EQ(res.buffer.triangles(v).size(), 1u);
  EXPECT_EQ(res.buffer.triangles(v)[0], 0u);
}

TEST(ClassifyBoundary, OverflowIsReportedAndRetried) {
  const auto cube = oracle::unit_cube();
  const GridSpec spec({2, 2, 2}, compute_aabb(cube));
  const auto res = classify_boundary(cube, spec, 1);
  EXPECT_TRUE(res.buffer.overflowed());
  EXPECT_GE(res.buffer.max_count(), 2u);
  const auto retried = classify_boundary_with_retry(cube, spec, 1);
  EXPECT_FALSE(retried.buffer.overflowed());
  EXPECT_EQ(retried.grid.cells, res.grid.cells);
  for (std::size_t v = 0; v < 8; ++v) EXPECT_EQ(retried.buffer.triangles(v).size(), retried.buffer.count(v));
}

TEST(ClassifyBoundary, RetryGivesUpAfterLimit) {
  // 200 coincident triangles in one cell, capacity 1, no retries.
  TriangleMesh m;
  m.vertices = {{0.1, 0.1, 0.1}, {0.2, 0.1, 0.1}, {0.1, 0.2, 0.1}};
  for (int t = 0; t < 200; ++t) m.triangles.push_back({0, 1, 2});
  EXPECT_THROW(classify_boundary_with_retry(m, GridSpec({2, 2, 2}, kUnit), 1, 0), OverflowedBufferError);
  EXPECT_NO_THROW(classify_boundary_with_retry(m, GridSpec({2, 2, 2}, kUnit), 1, 1));
}

TEST(ClassifyBoundary, MatchesBruteForceOnRandomSoups) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto soup = oracle::random_soup(rng, 5 + rng.below(40), kUnit);
    const int n = 1 + int(rng.below(8));
    const GridSpec spec({n, n, n}, compute_aabb(soup));
    const auto res = classify_boundary(soup, spec, 64);
    ASSERT_EQ(boundary_flags(res.grid), oracle::brute_force_boundary(soup, spec)) << "trial " << trial;
  }
}

TEST(ClassifyBoundary, CullingNeverLosesACell) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto soup = oracle::random_soup(rng, 20, kUnit);
    const GridSpec spec({8, 8, 8}, compute_aabb(soup));
    for (std::size_t t = 0; t < soup.triangle_count(); ++t) {
      const auto tri = soup.triangle(t);
      const auto range = candidate_range(tri, spec);
      for (int k = 0; k < 8; ++k) {
        for (int j = 0; j < 8; ++j) {
          for (int i = 0; i < 8; ++i) {
            if (!tri_box_intersect(tri, spec.cell_box(i, j, k))) continue;
            ASSERT_TRUE(i >= range.lo.i && i <= range.hi.i && j >= range.lo.j && j <= range.hi.j &&
                        k >= range.lo.k && k <= range.hi.k);
          }
        }
      }
    }
  }
}

TEST(ClassifyBoundary, VertexOnSharedFaceTestsBothCells) {
  TriangleMesh m;  // triangle lying in the plane x = 0.5 shared by two cells
  m.vertices = {{0.5, 0.1, 0.1}, {0.5, 0.4, 0.1}, {0.5, 0.1, 0.4}};
  m.triangles = {{0, 1, 2}};
  const auto res = classify_boundary(m, GridSpec({2, 2, 2}, kUnit), 32);
  EXPECT_EQ(res.grid.cells[flatten_index(0, 0, 0, Dims{2, 2, 2})], CellState::Boundary);
  EXPECT_EQ(res.grid.cells[flatten_index(1, 0, 0, Dims{2, 2, 2})], CellState::Boundary);
}

TEST(ClassifyBoundary, PermutationInvariant) {
  Rng rng(5);
  const auto soup = oracle::random_soup(rng, 40, kUnit);
  const GridSpec spec({6, 6, 6}, compute_aabb(soup));
  std::vector<std::uint32_t> perm(soup.triangle_count());
  std::iota(perm.begin(), perm.end(), 0u);
  rng.shuffle(perm.begin(), perm.end());
  TriangleMesh shuffled = soup;
  for (std::size_t t = 0; t < perm.size(); ++t) shuffled.triangles[t] = soup.triangles[perm[t]];
  const auto a = classify_boundary(soup, spec, 64);
  const auto b = classify_boundary(shuffled, spec, 64);
  ASSERT_EQ(a.grid.cells, b.grid.cells);
  for (std::size_t v = 0; v < spec.cell_count(); ++v) {
    std::set<std::uint32_t> sa(a.buffer.triangles(v).begin(), a.buffer.triangles(v).end());
    std::set<std::uint32_t> sb;
    for (auto t : b.buffer.triangles(v)) sb.insert(perm[t]);
    ASSERT_EQ(sa, sb);
  }
}

TEST(ClassifyBoundary, ThreadCountDoesNotChangeResult) {
  Rng rng(9);
  const auto soup = oracle::random_soup(rng, 500, kUnit);
  const GridSpec spec({8, 8, 8}, compute_aabb(soup));
  // Counts are order independent even when the buffer overflows; the stored
  // lists are only compared for a buffer that did not.
  for (std::uint32_t capacity : {8u, 256u}) {
    set_worker_count(1);
    const auto a = classify_boundary(soup, spec, capacity);
    set_worker_count(4);
    const auto b = classify_boundary(soup, spec, capacity);
    set_worker_count(0);
    ASSERT_EQ(a.grid.cells, b.grid.cells);
    ASSERT_EQ(a.buffer.overflowed(), b.buffer.overflowed());
    EXPECT_EQ(a.buffer.max_count(), b.buffer.max_count());
    for (std::size_t v = 0; v < spec.cell_count(); ++v) {
      ASSERT_EQ(a.buffer.count(v), b.buffer.count(v));
      if (!a.buffer.overflowed()) {
        ASSERT_TRUE(std::ranges::equal(a.buffer.triangles(v), b.buffer.triangles(v)));
      }
    }
    if (capacity == 256u) {
      EXPECT_FALSE(a.buffer.overflowed());
    }
  }
}

TEST(ClassifyBoundary, MeshOutsideBoxThrows) {
  const auto cube = oracle::unit_cube();
  EXPECT_THROW(classify_boundary(cube, GridSpec({2, 2, 2}, Aabb{{0, 0, 0}, {0.5, 1, 1}}), 32), OutOfBoundsError);
}

TEST(FillInside, CubeShellCentralCells) {
  const auto cube = oracle::unit_cube();
  const GridSpec spec({4, 4, 4}, compute_aabb(cube, 0.25));
  const auto filled = voxelize(cube, spec, {true, false, 32});
  EXPECT_EQ(filled.count(CellState::Boundary), 56u);
  EXPECT_EQ(filled.count(CellState::Inside), 8u);
  for (int k = 0; k < 4; ++k) {
    for (int j = 0; j < 4; ++j) {
      for (int i = 0; i < 4; ++i) {
        if (filled.at(i, j, k) == CellState::Boundary) continue;
        const bool oracle = oracle::winding_number(cube, spec.cell_center(i, j, k)) > 0.5;
        EXPECT_EQ(filled.at(i, j, k) == CellState::Inside, oracle) << i << j << k;
      }
    }
  }
}

TEST(FillInside, RaysThroughTriangleEdgesAreResolved) {
  // Cell centers with y == z sit exactly on the diagonals of the x faces.
  const auto cube = oracle::unit_cube();
  const GridSpec spec({4, 4, 4}, Aabb{{-0.5, -0.5, -0.5}, {1.5, 1.5, 1.5}});
  const ParityClassifier parity(cube, spec);
  for (int k = 0; k < 4; ++k) {
    for (int j = 0; j < 4; ++j) {
      for (int i = 0; i < 4; ++i) {
        const bool oracle = oracle::winding_number(cube, spec.cell_center(i, j, k)) > 0.5;
        EXPECT_EQ(parity.inside(i, j, k), oracle) << i << j << k;
      }
    }
  }
}

TEST(FillInside, FlatPlaneHasNoInside) {
  TriangleMesh plane;
  plane.vertices = {{0, 0, 0.5}, {1, 0, 0.5}, {1, 1, 0.5}, {0, 1, 0.5}};
  plane.triangles = {{0, 1, 2}, {0, 2, 3}};
  const auto g = voxelize(plane, GridSpec({5, 5, 5}, Aabb{{-0.1, -0.1, 0}, {1.1, 1.1, 1}}), {true, false, 32});
  EXPECT_EQ(g.count(CellState::Inside), 0u);
  EXPECT_GT(g.count(CellState::Boundary), 0u);
}

TEST(FillInside, AllBoundaryGridUnchanged) {
  const auto cube = oracle::unit_cube();
  const GridSpec spec({2, 2, 2}, compute_aabb(cube));
  const auto res = classify_boundary(cube, spec, 32);
  EXPECT_EQ(fill_inside(res.grid, cube).cells, res.grid.cells);
}

TEST(AverageNormals, Examples) {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}, {0, 2, 1}};
  // Normals: (0,0,1), (1,0,0), (0,1,0), (0,0,-1).
  const std::uint32_t up[] = {0};
  EXPECT_EQ(average_unit_normals(m, up), (Normal3f{0.f, 0.f, 1.f}));
  const std::uint32_t xy[] = {1, 2};
  const auto n = average_unit_normals(m, xy);
  EXPECT_NEAR(n[0], 1.0 / std::sqrt(2.0), 1e-7);
  EXPECT_NEAR(n[1], 1.0 / std::sqrt(2.0), 1e-7);
  EXPECT_EQ(n[2], 0.f);
  const std::uint32_t opposite[] = {0, 3};
  EXPECT_EQ(average_unit_normals(m, opposite), (Normal3f{0.f, 0.f, 0.f}));
}

TEST(AverageNormals, BoundaryCellsUnitOrZero) {
  const auto cube = oracle::unit_cube();
  const auto g = voxelize(cube, GridSpec({5, 5, 5}, compute_aabb(cube)));
  ASSERT_TRUE(g.has_normals());
  for (std::size_t v = 0; v < g.cells.size(); ++v) {
    if (g.cells[v] != CellState::Boundary) continue;
    const auto& n = g.normals[v];
    const double len = std::sqrt(double(n[0]) * n[0] + double(n[1]) * n[1] + double(n[2]) * n[2]);
    EXPECT_TRUE(len == 0.0 || std::abs(len - 1.0) < 1e-6);
  }
}
