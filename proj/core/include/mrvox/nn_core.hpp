// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// Small deterministic tensor engine: 3D convolution, ReLU, max pooling,
// flatten, dense, softmax cross-entropy and plain SGD, each with an analytic
// backward pass. Instantiated for float (training) and double (gradient
// checks).
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrvox/tensor.hpp"

namespace mrvox {

/// Seeded mt19937_64 stream with portable derived draws (the standard
/// distributions are implementation-defined, these are not).
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), rejection sampled.
  std::uint64_t below(std::uint64_t n);

  /// Fisher-Yates shuffle using below().
  template <class It>
  void shuffle(It first, It last) {
    const auto n = std::uint64_t(last - first);
    for (std::uint64_t i = n; i > 1; --i) std::swap(first[i - 1], first[below(i)]);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Layer kernels. Shapes: volumes are [C, D, H, W]; conv weights are
// [C_out, C_in, k, k, k]; dense weights are [out, in].

template <class T>
BasicTensor<T> conv3d_forward(const BasicTensor<T>& x, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                              int stride, int pad);

template <class T>
struct Conv3dGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dw;
  BasicTensor<T> db;
};

template <class T>
Conv3dGrads<T> conv3d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weights, int stride, int pad,
                               const BasicTensor<T>& dy, bool need_dx = true);

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

template <class T>
struct MaxPoolResult {
  BasicTensor<T> y;
  /// Flat input index chosen for each output element (first maximum wins).
  std::vector<std::uint32_t> argmax;
};

template <class T>
MaxPoolResult<T> maxpool3d_forward(const BasicTensor<T>& x, int window);
template <class T>
BasicTensor<T> maxpool3d_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                                  const BasicTensor<T>& dy);

template <class T>
BasicTensor<T> flatten_forward(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> flatten_backward(const Shape& input_shape, const BasicTensor<T>& dy);

template <class T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& weights, const BasicTensor<T>& bias);

template <class T>
struct DenseGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dw;
  BasicTensor<T> db;
};

template <class T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& weights, const BasicTensor<T>& dy);

template <class T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> dlogits;
};

/// -log softmax(logits)[label] with max subtraction; gradient softmax - onehot.
/// Throws IndexError when label >= K.
template <class T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::size_t label);

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// p <- p - lr * g for every tensor pair.
template <class T>
void sgd_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, double lr);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every i.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

// ---------------------------------------------------------------------------
// Networks.

enum class LayerKind : std::uint8_t { Conv3d = 0, ReLU = 1, MaxPool3d = 2, Flatten = 3, Dense = 4 };

/// One layer of a sequential stack. Input sizes left at 0 are inferred from
/// the previous layer when the network is built.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  int window = 0;
  int in_features = 0;
  int out_features = 0;

  static LayerSpec conv3d(int out_channels, int kernel, int stride = 1, int pad = 0, int in_channels = 0) {
    LayerSpec s;
    s.kind = LayerKind::Conv3d;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    return s;
  }
  static LayerSpec relu() { return {}; }
  static LayerSpec maxpool3d(int window) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool3d;
    s.window = window;
    return s;
  }
  static LayerSpec flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
  }
  static LayerSpec dense(int out_features, int in_features = 0) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in_features = in_features;
    s.out_features = out_features;
    return s;
  }

  bool has_params() const { return kind == LayerKind::Conv3d || kind == LayerKind::Dense; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Compact text form, e.g. "conv:16:3:1:1,relu,pool:2,flatten,dense:10"
/// (conv:out:kernel[:stride[:pad]], pool:window, dense:out).
std::vector<LayerSpec> parse_layers(std::string_view text);
std::string format_layers(std::span<const LayerSpec> layers);

/// Output shape of one layer; throws ShapeError when it does not compose.
Shape layer_output_shape(const LayerSpec& layer, const Shape& input);

template <class T>
class Network {
 public:
  struct Cache {
    /// Input of every layer, in order.
    std::vector<BasicTensor<T>> inputs;
    std::vector<std::vector<std::uint32_t>> argmax;
  };

  Network() = default;
  /// Resolves inferred sizes and validates composition; parameters start at 0.
  Network(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.back(); }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  /// shapes()[0] is the input, shapes()[l + 1] the output of layer l.
  const std::vector<Shape>& shapes() const { return shapes_; }

  /// Weight then bias for every parametric layer, in layer order.
  std::vector<BasicTensor<T>>& params() { return params_; }
  const std::vector<BasicTensor<T>>& params() const { return params_; }
  std::size_t parameter_count() const;

  /// Input element count plus every layer's output element count.
  std::size_t activation_count() const;

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  void init(Rng& rng);

  /// Zero tensors with the shapes of params().
  std::vector<BasicTensor<T>> zero_grads() const;

  /// Forward pass; `cache` may be null when no backward pass follows.
  BasicTensor<T> forward(const BasicTensor<T>& x, Cache* cache = nullptr) const;

  /// Backward pass. Parameter gradients are added into `grads`; returns dL/dx
  /// (empty when need_input_grad is false).
  BasicTensor<T> backward(const Cache& cache, const BasicTensor<T>& dy, std::vector<BasicTensor<T>>& grads,
                          bool need_input_grad = true) const;

  /// dst += src, shapes must match.
  static void accumulate_one(BasicTensor<T>& dst, const BasicTensor<T>& src);

  template <class U>
  Network<U> cast() const {
    Network<U> out(input_shape_, layers_);
    for (std::size_t p = 0; p < params_.size(); ++p) out.params()[p] = params_[p].template cast<U>();
    return out;
  }

 private:
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::vector<int> param_index_;  // per layer, -1 when parameter-free
  std::vector<BasicTensor<T>> params_;
};

/// Adds `src` into `dst` elementwise, tensor by tensor.
template <class T>
void accumulate(std::vector<BasicTensor<T>>& dst, const std::vector<BasicTensor<T>>& src);

template <class T>
void scale(std::vector<BasicTensor<T>>& tensors, double factor);

/// Trains a plain network for one batch: per-sample forward, cross-entropy,
/// backward; gradients averaged in ascending sample order; one SGD step.
/// Returns the mean loss.
template <class T>
double train_step(Network<T>& net, std::span<const BasicTensor<T>* const> inputs,
                  std::span<const std::size_t> labels, double lr);

/// Index of the largest value; ties go to the lowest index.
template <class T>
std::size_t argmax(const BasicTensor<T>& values);

// ---------------------------------------------------------------------------
// Checkpoints.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t seed = 0;
  /// 4 for float payloads, 8 for double.
  std::uint32_t scalar_bytes = 8;
  std::map<std::string, std::string> metadata;
  /// Networks widened to double on load.
  std::vector<Network<double>> networks;
};

template <class T>
std::vector<std::byte> encode_checkpoint(std::uint64_t seed, const std::map<std::string, std::string>& metadata,
                                         std::span<const Network<T>* const> networks);

/// Throws FormatError naming the offending section.
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);

}  // namespace mrvox
