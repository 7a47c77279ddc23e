// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// Multi-resolution CNN. A fine network g (shared weights theta2) maps every
// Boundary cell's F^3 occupancy block to one scalar; that scalar, squashed
// by a sigmoid, replaces the cell's occupancy in the coarse input x1, and the
// coarse network f (theta1) classifies x1:
//
//   f'(x, theta1, theta2) = f(x1 with x1[b] = sigmoid(g(x2_b, theta2)), theta1)
//
// The backward pass reads dL/dx1 at each Boundary cell through the prefix-sum
// index and pushes it through g, summing the per-cell theta2 gradients in
// ascending cell order.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mrvox/multires.hpp"
#include "mrvox/nn_core.hpp"

namespace mrvox {

/// Logistic sigmoid used to embed fine-network outputs into [0, 1].
struct SigmoidEmbedding {
  static double value(double z);
  /// Derivative expressed through the activation value s = value(z).
  static double derivative_from_value(double s) { return s * (1.0 - s); }
};

inline constexpr const char* kDefaultCoarseLayers = "conv:16:3:1:1,relu,pool:2,conv:32:3:1:1,relu,flatten";
inline constexpr const char* kDefaultFineLayers = "conv:8:3:1:1,relu,flatten,dense:1";

/// Default coarse stack with a dense head over `num_classes`.
std::vector<LayerSpec> default_coarse_layers(int num_classes);
std::vector<LayerSpec> default_fine_layers();

/// Input tensor shape [1, nz, ny, nx] whose flat order equals the grid's
/// flat cell order.
Shape volume_shape(const Dims& dims);

template <class T>
struct MrcnnModel {
  /// Coarse network (theta1): [1, nz, ny, nx] -> K logits.
  Network<T> coarse;
  /// Fine network (theta2): [1, F, F, F] -> one scalar.
  Network<T> fine;
  /// Bumped on every parameter update; caches remember the value they saw.
  std::uint64_t version = 0;

  MrcnnModel() = default;
  MrcnnModel(Network<T> coarse_net, Network<T> fine_net);

  /// Builds both stacks and initializes them from `rng` (coarse first).
  static MrcnnModel create(Dims coarse_dims, int fine_factor, std::vector<LayerSpec> coarse_layers,
                           std::vector<LayerSpec> fine_layers, Rng& rng);

  Dims coarse_dims() const;
  int fine_factor() const { return fine.input_shape()[1]; }
  int num_classes() const { return coarse.output_shape()[0]; }

  template <class U>
  MrcnnModel<U> cast() const {
    MrcnnModel<U> out(coarse.template cast<U>(), fine.template cast<U>());
    out.version = version;
    return out;
  }
};

template <class T>
struct EmbedCache {
  struct BoundaryEntry {
    std::size_t coarse_index;
    std::size_t block_offset;  // first fine cell of the block
  };

  /// Coarse input after embedding.
  BasicTensor<T> x1;
  /// Boundary cells in ascending coarse flat index.
  std::vector<BoundaryEntry> boundary;
  /// Fine-network forward caches, one per Boundary cell.
  std::vector<typename Network<T>::Cache> fine_caches;
  /// Embedded values sigmoid(g(x2_b)), one per Boundary cell.
  std::vector<T> embedded;
  typename Network<T>::Cache coarse_cache;

  const void* model = nullptr;
  std::uint64_t model_version = 0;
};

template <class T>
struct MrcnnGrads {
  std::vector<BasicTensor<T>> coarse;
  std::vector<BasicTensor<T>> fine;
  /// dL/dx2_b per Boundary cell, only when requested.
  std::optional<std::vector<BasicTensor<T>>> fine_blocks;
};

/// Occupancy encoding of the coarse level: Outside -> 0, Inside -> 1,
/// Boundary -> 1.
template <class T>
BasicTensor<T> coarse_occupancy(const VoxelGrid& grid);

/// Fine block encoding, [1, F, F, F]: Boundary/Inside -> 1, Outside -> 0.
template <class T>
BasicTensor<T> fine_block_tensor(std::span<const CellState> block, int fine_factor);

/// Forward pass; fills `cache` when given.
template <class T>
BasicTensor<T> embed_forward(const MrcnnModel<T>& model, const MultiResGrid& grid, EmbedCache<T>* cache = nullptr);

/// Backward pass from dL/dlogits. Throws CacheError when `cache` came from a
/// different model or an older parameter version.
template <class T>
MrcnnGrads<T> embed_backward(const MrcnnModel<T>& model, const EmbedCache<T>& cache, const BasicTensor<T>& dlogits,
                             bool want_fine_block_grads = false);

using MrcnnSample = std::pair<const MultiResGrid*, std::size_t>;

/// One SGD step over a batch; gradients averaged in ascending sample order.
/// Returns the mean cross-entropy loss.
template <class T>
double train_step(MrcnnModel<T>& model, std::span<const MrcnnSample> batch, double lr);

/// Argmax of the logits, ties to the lowest class index.
template <class T>
std::size_t predict(const MrcnnModel<T>& model, const MultiResGrid& grid);

}  // namespace mrvox
