// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "mrvox/mrcnn.hpp"

namespace bm = benchmark;
using namespace mrvox;

namespace {

BasicTensor<float> random_volume(Rng& rng, const Shape& shape, double p) {
  BasicTensor<float> x(shape);
  for (auto& v : x.values()) v = rng.uniform() < p ? 1.f : 0.f;
  return x;
}

MultiResGrid random_grid(Rng& rng, int n, int F, double p) {
  MultiResGrid mr{VoxelGrid(GridSpec({n, n, n}, {{0, 0, 0}, {1, 1, 1}})), F, {}, {}, {}, false};
  for (auto& c : mr.coarse.cells) c = rng.uniform() < p ? CellState::Boundary : CellState::Outside;
  mr.index = build_prefix_index(mr.coarse);
  mr.fine_cells.resize(std::size_t(mr.index.total) * mr.block_size());
  for (auto& c : mr.fine_cells) c = rng.uniform() < 0.3 ? CellState::Boundary : CellState::Outside;
  return mr;
}

}  // namespace

static void BM_Conv3dForward(bm::State& st) {
  Rng rng(1);
  const int n = int(st.range(0));
  const auto x = random_volume(rng, {1, n, n, n}, 0.2);
  BasicTensor<float> w({16, 1, 3, 3, 3}, 0.1f);
  const BasicTensor<float> b({16});
  for (auto _ : st) bm::DoNotOptimize(conv3d_forward(x, w, b, 1, 1));
}
BENCHMARK(BM_Conv3dForward)->Arg(8)->Arg(32)->Unit(bm::kMicrosecond);

static void BM_Conv3dBackward(bm::State& st) {
  Rng rng(2);
  const int n = int(st.range(0));
  const auto x = random_volume(rng, {1, n, n, n}, 0.2);
  BasicTensor<float> w({16, 1, 3, 3, 3}, 0.1f);
  const BasicTensor<float> dy({16, n, n, n}, 0.01f);
  for (auto _ : st) bm::DoNotOptimize(conv3d_backward(x, w, 1, 1, dy, false));
}
BENCHMARK(BM_Conv3dBackward)->Arg(8)->Arg(32)->Unit(bm::kMicrosecond);

// One training sample through the default dense 32^3 stack.
static void BM_DenseSampleStep(bm::State& st) {
  Rng rng(3);
  Network<float> net({1, 32, 32, 32}, default_coarse_layers(10));
  net.init(rng);
  const auto x = random_volume(rng, {1, 32, 32, 32}, 0.1);
  const BasicTensor<float>* in[] = {&x};
  const std::size_t label[] = {3};
  for (auto _ : st) bm::DoNotOptimize(train_step<float>(net, in, label, 0.0));
}
BENCHMARK(BM_DenseSampleStep)->Unit(bm::kMillisecond);

// One training sample through the default two-level model at 8^3 + 4^3.
static void BM_MultiresSampleStep(bm::State& st) {
  Rng rng(4);
  auto model = MrcnnModel<float>::create({8, 8, 8}, 4, default_coarse_layers(10), default_fine_layers(), rng);
  const auto grid = random_grid(rng, 8, 4, double(st.range(0)) / 100.0);
  const MrcnnSample batch[] = {{&grid, 3}};
  for (auto _ : st) bm::DoNotOptimize(train_step<float>(model, batch, 0.0));
  st.counters["boundary"] = double(grid.boundary_count());
}
BENCHMARK(BM_MultiresSampleStep)->Arg(10)->Arg(30)->Unit(bm::kMillisecond);
