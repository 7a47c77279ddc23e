// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "mrvox/mesh_io.hpp"
#include "mrvox/multires.hpp"
#include "mrvox/nn_core.hpp"

namespace bm = benchmark;
using namespace mrvox;

namespace {

// Closed UV sphere of radius 1, `rings` x 2*rings quads.
TriangleMesh uv_sphere(int rings) {
  TriangleMesh m;
  const int segs = 2 * rings;
  m.vertices.push_back({0, 0, 1});
  for (int r = 1; r < rings; ++r) {
    const double th = std::numbers::pi * r / rings;
    for (int s = 0; s < segs; ++s) {
      const double ph = 2 * std::numbers::pi * s / segs;
      m.vertices.push_back({std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)});
    }
  }
  m.vertices.push_back({0, 0, -1});
  const auto ring = [&](int r, int s) { return std::uint32_t(1 + (r - 1) * segs + (s % segs)); };
  const auto bottom = std::uint32_t(m.vertices.size() - 1);
  for (int s = 0; s < segs; ++s) {
    m.triangles.push_back({0, ring(1, s), ring(1, s + 1)});
    for (int r = 1; r + 1 < rings; ++r) {
      m.triangles.push_back({ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)});
      m.triangles.push_back({ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)});
    }
    m.triangles.push_back({ring(rings - 1, s), bottom, ring(rings - 1, s + 1)});
  }
  return m;
}

}  // namespace

static void BM_TriBoxIntersect(bm::State& st) {
  Rng rng(1);
  std::vector<std::pair<Triangle, Aabb>> pairs(1024);
  for (auto& [t, b] : pairs) {
    for (auto& v : t) v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Vec3 c{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    b = {c - Vec3{0.2, 0.2, 0.2}, c + Vec3{0.2, 0.2, 0.2}};
  }
  std::size_t i = 0;
  for (auto _ : st) {
    const auto& [t, b] = pairs[i++ & 1023];
    bm::DoNotOptimize(tri_box_intersect(t, b));
  }
  st.SetItemsProcessed(st.iterations());
}
BENCHMARK(BM_TriBoxIntersect);

static void BM_ClassifyBoundary(bm::State& st) {
  const auto mesh = uv_sphere(24);
  const int n = int(st.range(0));
  const GridSpec spec({n, n, n}, compute_aabb(mesh));
  for (auto _ : st) bm::DoNotOptimize(classify_boundary_with_retry(mesh, spec));
  st.counters["triangles"] = double(mesh.triangle_count());
}
BENCHMARK(BM_ClassifyBoundary)->Arg(8)->Arg(32)->Unit(bm::kMillisecond);

static void BM_VoxelizeMultires(bm::State& st) {
  const auto mesh = uv_sphere(24);
  const Aabb box = compute_aabb(mesh);
  const bool fill = st.range(0) != 0;
  for (auto _ : st) bm::DoNotOptimize(voxelize_multires(mesh, box, {8, 8, 8}, 4, {fill, true}));
}
BENCHMARK(BM_VoxelizeMultires)->Arg(0)->Arg(1)->Unit(bm::kMillisecond);

static void BM_VoxelizeDense(bm::State& st) {
  const auto mesh = uv_sphere(24);
  const GridSpec spec({32, 32, 32}, compute_aabb(mesh));
  const bool fill = st.range(0) != 0;
  for (auto _ : st) bm::DoNotOptimize(voxelize(mesh, spec, {.inside_fill = fill, .normals = true}));
}
BENCHMARK(BM_VoxelizeDense)->Arg(0)->Arg(1)->Unit(bm::kMillisecond);

static void BM_ExclusiveScan(bm::State& st) {
  Rng rng(2);
  std::vector<std::uint8_t> flags(std::size_t(st.range(0)));
  for (auto& f : flags) f = rng.uniform() < 0.2;
  for (auto _ : st) bm::DoNotOptimize(exclusive_scan_flags(flags));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_ExclusiveScan)->Arg(512)->Arg(32768);
