// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include "mrvox/mrcnn.hpp"

#include <cmath>

#include <fmt/format.h>

#include "mrvox/parallel.hpp"

namespace mrvox {

double SigmoidEmbedding::value(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<LayerSpec> default_coarse_layers(int num_classes) {
  auto layers = parse_layers(kDefaultCoarseLayers);
  layers.push_back(LayerSpec::dense(num_classes));
  return layers;
}

std::vector<LayerSpec> default_fine_layers() { return parse_layers(kDefaultFineLayers); }

Shape volume_shape(const Dims& dims) { return {1, dims.nz, dims.ny, dims.nx}; }

template <class T>
MrcnnModel<T>::MrcnnModel(Network<T> coarse_net, Network<T> fine_net)
    : coarse(std::move(coarse_net)), fine(std::move(fine_net)) {
  const Shape& ci = coarse.input_shape();
  const Shape& fi = fine.input_shape();
  if (ci.size() != 4 || ci[0] != 1) throw ShapeError("coarse network input must be [1, D, H, W]");
  if (fi.size() != 4 || fi[0] != 1 || fi[1] != fi[2] || fi[2] != fi[3]) {
    throw ShapeError("fine network input must be [1, F, F, F]");
  }
  if (fine.output_shape() != Shape{1}) throw ShapeError("fine network must output a single scalar");
  if (coarse.output_shape().size() != 1 || coarse.output_shape()[0] < 2) {
    throw ShapeError("coarse network must output K >= 2 logits");
  }
}

template <class T>
MrcnnModel<T> MrcnnModel<T>::create(Dims coarse_dims, int fine_factor, std::vector<LayerSpec> coarse_layers,
                                    std::vector<LayerSpec> fine_layers, Rng& rng) {
  Network<T> c(volume_shape(coarse_dims), std::move(coarse_layers));
  Network<T> f({1, fine_factor, fine_factor, fine_factor}, std::move(fine_layers));
  c.init(rng);
  f.init(rng);
  return MrcnnModel(std::move(c), std::move(f));
}

template <class T>
Dims MrcnnModel<T>::coarse_dims() const {
  const Shape& s = coarse.input_shape();
  return {s[3], s[2], s[1]};
}

template <class T>
BasicTensor<T> coarse_occupancy(const VoxelGrid& grid) {
  BasicTensor<T> x(volume_shape(grid.dims()));
  for (std::size_t v = 0; v < grid.cells.size(); ++v) x[v] = grid.cells[v] == CellState::Outside ? T(0) : T(1);
  return x;
}

template <class T>
BasicTensor<T> fine_block_tensor(std::span<const CellState> block, int fine_factor) {
  BasicTensor<T> x({1, fine_factor, fine_factor, fine_factor});
  if (block.size() != x.size()) throw ShapeError("fine block size does not match F^3");
  for (std::size_t s = 0; s < block.size(); ++s) x[s] = block[s] == CellState::Outside ? T(0) : T(1);
  return x;
}

template <class T>
BasicTensor<T> embed_forward(const MrcnnModel<T>& model, const MultiResGrid& grid, EmbedCache<T>* cache) {
  if (grid.coarse.dims() != model.coarse_dims()) {
    const Dims d = grid.coarse.dims();
    throw ShapeError(fmt::format("grid coarse dims ({}, {}, {}) do not match the coarse network input {}", d.nx, d.ny,
                                 d.nz, shape_string(model.coarse.input_shape())));
  }
  if (grid.fine_factor != model.fine_factor()) {
    throw ShapeError(fmt::format("grid fine factor {} does not match the fine network input {}", grid.fine_factor,
                                 model.fine_factor()));
  }

  // Base encoding: Outside 0, Inside 1; Boundary cells are overwritten below.
  BasicTensor<T> x1(volume_shape(grid.coarse.dims()));
  std::vector<typename EmbedCache<T>::BoundaryEntry> boundary;
  boundary.reserve(grid.boundary_count());
  for (std::size_t v = 0; v < grid.coarse.cells.size(); ++v) {
    const CellState s = grid.coarse.cells[v];
    x1[v] = s == CellState::Inside ? T(1) : T(0);
    if (s == CellState::Boundary) {
      boundary.push_back({v, std::size_t(grid.index.offsets[v]) * grid.block_size()});
    }
  }

  std::vector<typename Network<T>::Cache> fine_caches(cache ? boundary.size() : 0);
  std::vector<T> embedded(boundary.size());
  const int F = grid.fine_factor;
  parallel_for(boundary.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const auto block = std::span<const CellState>(grid.fine_cells).subspan(boundary[b].block_offset,
                                                                              grid.block_size());
      const auto x2 = fine_block_tensor<T>(block, F);
      const auto g = model.fine.forward(x2, cache ? &fine_caches[b] : nullptr);
      embedded[b] = T(SigmoidEmbedding::value(double(g[0])));
    }
  });
  for (std::size_t b = 0; b < boundary.size(); ++b) x1[boundary[b].coarse_index] = embedded[b];

  typename Network<T>::Cache coarse_cache;
  auto logits = model.coarse.forward(x1, cache ? &coarse_cache : nullptr);
  if (cache) {
    cache->x1 = std::move(x1);
    cache->boundary = std::move(boundary);
    cache->fine_caches = std::move(fine_caches);
    cache->embedded = std::move(embedded);
    cache->coarse_cache = std::move(coarse_cache);
    cache->model = &model;
    cache->model_version = model.version;
  }
  return logits;
}

template <class T>
MrcnnGrads<T> embed_backward(const MrcnnModel<T>& model, const EmbedCache<T>& cache, const BasicTensor<T>& dlogits,
                             bool want_fine_block_grads) {
  if (cache.model != &model || cache.model_version != model.version) {
    throw CacheError("embed cache was produced by a different model or an older parameter version");
  }
  if (cache.fine_caches.size() != cache.boundary.size() || cache.embedded.size() != cache.boundary.size() ||
      cache.x1.shape() != model.coarse.input_shape()) {
    throw CacheError("embed cache is incomplete");
  }

  MrcnnGrads<T> out{model.coarse.zero_grads(), model.fine.zero_grads(), std::nullopt};
  const auto dx1 = model.coarse.backward(cache.coarse_cache, dlogits, out.coarse, true);

  const std::size_t nb = cache.boundary.size();
  std::vector<std::vector<BasicTensor<T>>> per_cell(nb);
  std::vector<BasicTensor<T>> block_grads(want_fine_block_grads ? nb : 0);
  parallel_for(nb, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const double s = double(cache.embedded[b]);
      const T dv = T(double(dx1[cache.boundary[b].coarse_index]) * SigmoidEmbedding::derivative_from_value(s));
      per_cell[b] = model.fine.zero_grads();
      auto dx2 = model.fine.backward(cache.fine_caches[b], BasicTensor<T>({1}, {dv}), per_cell[b],
                                     want_fine_block_grads);
      if (want_fine_block_grads) block_grads[b] = std::move(dx2);
    }
  });
  // Shared theta2: sum per-cell gradients in ascending coarse index order.
  for (std::size_t b = 0; b < nb; ++b) accumulate(out.fine, per_cell[b]);
  if (want_fine_block_grads) out.fine_blocks = std::move(block_grads);
  return out;
}

template <class T>
double train_step(MrcnnModel<T>& model, std::span<const MrcnnSample> batch, double lr) {
  if (batch.empty()) throw Error("train_step needs a non-empty batch");
  const std::size_t n = batch.size();
  std::vector<MrcnnGrads<T>> per_sample(n);
  std::vector<double> losses(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      EmbedCache<T> cache;
      const auto logits = embed_forward(model, *batch[s].first, &cache);
      auto loss = softmax_cross_entropy(logits, batch[s].second);
      losses[s] = loss.loss;
      per_sample[s] = embed_backward(model, cache, loss.dlogits);
    }
  });
  auto coarse = model.coarse.zero_grads();
  auto fine = model.fine.zero_grads();
  double loss_sum = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    accumulate(coarse, per_sample[s].coarse);
    accumulate(fine, per_sample[s].fine);
    loss_sum += losses[s];
  }
  scale(coarse, 1.0 / double(n));
  scale(fine, 1.0 / double(n));
  sgd_step<T>(model.coarse.params(), coarse, lr);
  sgd_step<T>(model.fine.params(), fine, lr);
  ++model.version;
  return loss_sum / double(n);
}

template <class T>
std::size_t predict(const MrcnnModel<T>& model, const MultiResGrid& grid) {
  return argmax(embed_forward<T>(model, grid, nullptr));
}

#define MRVOX_INSTANTIATE_MRCNN(T)                                                                           \
  template struct MrcnnModel<T>;                                                                             \
  template BasicTensor<T> coarse_occupancy<T>(const VoxelGrid&);                                             \
  template BasicTensor<T> fine_block_tensor<T>(std::span<const CellState>, int);                             \
  template BasicTensor<T> embed_forward(const MrcnnModel<T>&, const MultiResGrid&, EmbedCache<T>*);          \
  template MrcnnGrads<T> embed_backward(const MrcnnModel<T>&, const EmbedCache<T>&, const BasicTensor<T>&, bool); \
  template double train_step(MrcnnModel<T>&, std::span<const MrcnnSample>, double);                          \
  template std::size_t predict(const MrcnnModel<T>&, const MultiResGrid&);

MRVOX_INSTANTIATE_MRCNN(float)
MRVOX_INSTANTIATE_MRCNN(double)

#undef MRVOX_INSTANTIATE_MRCNN

}  // namespace mrvox
