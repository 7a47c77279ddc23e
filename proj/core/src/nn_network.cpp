// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <cmath>
#include <optional>

#include <fmt/format.h>

#include "mrvox/byte_io.hpp"
#include "mrvox/nn_core.hpp"
#include "mrvox/parallel.hpp"

namespace mrvox {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

int to_int(std::string_view s, std::string_view layer) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ConfigError(fmt::format("bad integer '{}' in layer '{}'", s, layer));
  }
  return v;
}

}  // namespace

std::vector<LayerSpec> parse_layers(std::string_view text) {
  std::vector<LayerSpec> layers;
  for (auto raw : split(text, ',')) {
    const auto item = trim(raw);
    if (item.empty()) continue;
    const auto parts = split(item, ':');
    const auto name = parts[0];
    auto arg = [&](std::size_t i, int fallback) {
      return i < parts.size() ? to_int(parts[i], item) : fallback;
    };
    if (name == "conv") {
      if (parts.size() < 3) throw ConfigError(fmt::format("conv needs conv:out:kernel[:stride[:pad]], got '{}'", item));
      layers.push_back(LayerSpec::conv3d(arg(1, 0), arg(2, 0), arg(3, 1), arg(4, 0)));
    } else if (name == "relu") {
      layers.push_back(LayerSpec::relu());
    } else if (name == "pool") {
      layers.push_back(LayerSpec::maxpool3d(arg(1, 2)));
    } else if (name == "flatten") {
      layers.push_back(LayerSpec::flatten());
    } else if (name == "dense") {
      if (parts.size() < 2) throw ConfigError(fmt::format("dense needs dense:out, got '{}'", item));
      layers.push_back(LayerSpec::dense(arg(1, 0)));
    } else {
      throw ConfigError(fmt::format("unknown layer '{}'", item));
    }
  }
  if (layers.empty()) throw ConfigError("empty layer list");
  return layers;
}

std::string format_layers(std::span<const LayerSpec> layers) {
  std::string out;
  for (const auto& l : layers) {
    if (!out.empty()) out += ',';
    switch (l.kind) {
      case LayerKind::Conv3d:
        out += fmt::format("conv:{}:{}:{}:{}", l.out_channels, l.kernel, l.stride, l.pad);
        break;
      case LayerKind::ReLU:
        out += "relu";
        break;
      case LayerKind::MaxPool3d:
        out += fmt::format("pool:{}", l.window);
        break;
      case LayerKind::Flatten:
        out += "flatten";
        break;
      case LayerKind::Dense:
        out += fmt::format("dense:{}", l.out_features);
        break;
    }
  }
  return out;
}

Shape layer_output_shape(const LayerSpec& l, const Shape& in) {
  switch (l.kind) {
    case LayerKind::Conv3d: {
      if (in.size() != 4) throw ShapeError("conv3d input must be [C, D, H, W], got " + shape_string(in));
      if (l.in_channels != in[0]) {
        throw ShapeError(fmt::format("conv3d expects {} input channels, got {}", l.in_channels, in[0]));
      }
      if (l.kernel < 1 || l.stride < 1 || l.pad < 0 || l.out_channels < 1) throw ShapeError("invalid conv3d spec");
      Shape out{l.out_channels, 0, 0, 0};
      for (int a = 1; a < 4; ++a) {
        const int span = in[std::size_t(a)] + 2 * l.pad - l.kernel;
        if (span < 0 || span % l.stride != 0) {
          throw ShapeError(fmt::format("conv3d k={} s={} p={} does not tile input {}", l.kernel, l.stride, l.pad,
                                       shape_string(in)));
        }
        out[std::size_t(a)] = span / l.stride + 1;
      }
      return out;
    }
    case LayerKind::ReLU:
      return in;
    case LayerKind::MaxPool3d: {
      if (in.size() != 4) throw ShapeError("maxpool3d input must be [C, D, H, W], got " + shape_string(in));
      if (l.window < 1) throw ShapeError("maxpool3d window must be >= 1");
      Shape out{in[0], in[1] / l.window, in[2] / l.window, in[3] / l.window};
      if (out[1] < 1 || out[2] < 1 || out[3] < 1) throw ShapeError("maxpool3d window larger than " + shape_string(in));
      return out;
    }
    case LayerKind::Flatten:
      return {int(shape_size(in))};
    case LayerKind::Dense:
      if (in.size() != 1) throw ShapeError("dense input must be rank 1 (add a flatten), got " + shape_string(in));
      if (l.in_features != in[0]) {
        throw ShapeError(fmt::format("dense expects {} input features, got {}", l.in_features, in[0]));
      }
      if (l.out_features < 1) throw ShapeError("dense needs at least one output feature");
      return {l.out_features};
  }
  throw ShapeError("unknown layer kind");
}

template <class T>
Network<T>::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  shapes_.push_back(input_shape_);
  for (auto& l : layers_) {
    const Shape& in = shapes_.back();
    if (l.kind == LayerKind::Conv3d && l.in_channels == 0 && !in.empty()) l.in_channels = in[0];
    if (l.kind == LayerKind::Dense && l.in_features == 0 && in.size() == 1) l.in_features = in[0];
    shapes_.push_back(layer_output_shape(l, in));
    if (l.kind == LayerKind::Conv3d) {
      param_index_.push_back(int(params_.size()));
      params_.emplace_back(Shape{l.out_channels, l.in_channels, l.kernel, l.kernel, l.kernel});
      params_.emplace_back(Shape{l.out_channels});
    } else if (l.kind == LayerKind::Dense) {
      param_index_.push_back(int(params_.size()));
      params_.emplace_back(Shape{l.out_features, l.in_features});
      params_.emplace_back(Shape{l.out_features});
    } else {
      param_index_.push_back(-1);
    }
  }
}

template <class T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <class T>
std::size_t Network<T>::activation_count() const {
  std::size_t n = 0;
  for (const auto& s : shapes_) n += shape_size(s);
  return n;
}

template <class T>
void Network<T>::init(Rng& rng) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (param_index_[l] < 0) continue;
    const auto& spec = layers_[l];
    double fan_in = 0;
    double fan_out = 0;
    if (spec.kind == LayerKind::Conv3d) {
      const double vol = double(spec.kernel) * spec.kernel * spec.kernel;
      fan_in = spec.in_channels * vol;
      fan_out = spec.out_channels * vol;
    } else {
      fan_in = spec.in_features;
      fan_out = spec.out_features;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    auto& w = params_[std::size_t(param_index_[l])];
    for (auto& v : w.values()) v = T(rng.uniform(-limit, limit));
    params_[std::size_t(param_index_[l]) + 1].fill(T(0));
  }
}

template <class T>
std::vector<BasicTensor<T>> Network<T>::zero_grads() const {
  std::vector<BasicTensor<T>> g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.emplace_back(p.shape());
  return g;
}

template <class T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T>& x, Cache* cache) const {
  if (x.shape() != input_shape_) {
    throw ShapeError("network expects input " + shape_string(input_shape_) + ", got " + shape_string(x.shape()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->argmax.assign(layers_.size(), {});
  }
  BasicTensor<T> h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& spec = layers_[l];
    BasicTensor<T> next;
    switch (spec.kind) {
      case LayerKind::Conv3d: {
        const auto p = std::size_t(param_index_[l]);
        next = conv3d_forward(h, params_[p], params_[p + 1], spec.stride, spec.pad);
        break;
      }
      case LayerKind::ReLU:
        next = relu_forward(h);
        break;
      case LayerKind::MaxPool3d: {
        auto r = maxpool3d_forward(h, spec.window);
        next = std::move(r.y);
        if (cache) cache->argmax[l] = std::move(r.argmax);
        break;
      }
      case LayerKind::Flatten:
        next = flatten_forward(h);
        break;
      case LayerKind::Dense: {
        const auto p = std::size_t(param_index_[l]);
        next = dense_forward(h, params_[p], params_[p + 1]);
        break;
      }
    }
    if (cache) cache->inputs.push_back(std::move(h));
    h = std::move(next);
  }
  return h;
}

template <class T>
BasicTensor<T> Network<T>::backward(const Cache& cache, const BasicTensor<T>& dy, std::vector<BasicTensor<T>>& grads,
                                    bool need_input_grad) const {
  if (cache.inputs.size() != layers_.size()) throw CacheError("network cache does not match the layer stack");
  if (dy.shape() != output_shape()) {
    throw ShapeError("upstream gradient " + shape_string(dy.shape()) + " vs output " + shape_string(output_shape()));
  }
  if (grads.size() != params_.size()) throw ShapeError("gradient list does not match parameters");
  BasicTensor<T> d = dy;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& spec = layers_[li];
    const auto& x = cache.inputs[li];
    const bool want_dx = need_input_grad || li > 0;
    switch (spec.kind) {
      case LayerKind::Conv3d: {
        const auto p = std::size_t(param_index_[li]);
        auto g = conv3d_backward(x, params_[p], spec.stride, spec.pad, d, want_dx);
        accumulate_one(grads[p], g.dw);
        accumulate_one(grads[p + 1], g.db);
        d = std::move(g.dx);
        break;
      }
      case LayerKind::ReLU:
        d = relu_backward(x, d);
        break;
      case LayerKind::MaxPool3d:
        d = maxpool3d_backward(x.shape(), cache.argmax[li], d);
        break;
      case LayerKind::Flatten:
        d = flatten_backward(x.shape(), d);
        break;
      case LayerKind::Dense: {
        const auto p = std::size_t(param_index_[li]);
        auto g = dense_backward(x, params_[p], d);
        accumulate_one(grads[p], g.dw);
        accumulate_one(grads[p + 1], g.db);
        d = std::move(g.dx);
        break;
      }
    }
  }
  return need_input_grad ? d : BasicTensor<T>();
}

template <class T>
void Network<T>::accumulate_one(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  if (dst.shape() != src.shape()) throw ShapeError("gradient shape mismatch");
  T* a = dst.data();
  const T* b = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) a[i] += b[i];
}

template <class T>
void accumulate(std::vector<BasicTensor<T>>& dst, const std::vector<BasicTensor<T>>& src) {
  if (dst.size() != src.size()) throw ShapeError("gradient list length mismatch");
  for (std::size_t p = 0; p < dst.size(); ++p) Network<T>::accumulate_one(dst[p], src[p]);
}

template <class T>
void scale(std::vector<BasicTensor<T>>& tensors, double factor) {
  const T f = T(factor);
  for (auto& t : tensors) {
    for (auto& v : t.values()) v *= f;
  }
}

template <class T>
double train_step(Network<T>& net, std::span<const BasicTensor<T>* const> inputs, std::span<const std::size_t> labels,
                  double lr) {
  if (inputs.empty()) throw Error("train_step needs a non-empty batch");
  if (inputs.size() != labels.size()) throw ShapeError("train_step: input/label count mismatch");
  const std::size_t n = inputs.size();
  std::vector<std::vector<BasicTensor<T>>> per_sample(n);
  std::vector<double> losses(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      typename Network<T>::Cache cache;
      const auto logits = net.forward(*inputs[s], &cache);
      auto loss = softmax_cross_entropy(logits, labels[s]);
      losses[s] = loss.loss;
      per_sample[s] = net.zero_grads();
      net.backward(cache, loss.dlogits, per_sample[s], false);
    }
  });
  // Fixed ascending reduction keeps parallel runs bitwise equal to serial ones.
  auto total = net.zero_grads();
  double loss_sum = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    accumulate(total, per_sample[s]);
    loss_sum += losses[s];
  }
  scale(total, 1.0 / double(n));
  sgd_step<T>(net.params(), total, lr);
  return loss_sum / double(n);
}

// ---------------------------------------------------------------------------
// Checkpoint encoding.

namespace {

void put_string(ByteWriter& w, std::string_view s) {
  w.put(std::uint32_t(s.size()));
  w.put_tag(s);
}

std::string get_string(ByteReader& r, const char* section) {
  const auto n = r.get<std::uint32_t>(section);
  const auto bytes = r.get_bytes(n, section);
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

}  // namespace

template <class T>
std::vector<std::byte> encode_checkpoint(std::uint64_t seed, const std::map<std::string, std::string>& metadata,
                                         std::span<const Network<T>* const> networks) {
  ByteWriter w;
  w.put_tag("MRCK");
  w.put(kCheckpointVersion);
  w.put(seed);
  w.put(std::uint32_t(sizeof(T)));
  w.put(std::uint32_t(metadata.size()));
  for (const auto& [k, v] : metadata) {
    put_string(w, k);
    put_string(w, v);
  }
  w.put(std::uint32_t(networks.size()));
  for (const Network<T>* net : networks) {
    w.put(std::uint32_t(net->input_shape().size()));
    for (int d : net->input_shape()) w.put(std::uint32_t(d));
    w.put(std::uint32_t(net->layers().size()));
    for (const auto& l : net->layers()) {
      w.put(static_cast<std::uint8_t>(l.kind));
      for (int v : {l.in_channels, l.out_channels, l.kernel, l.stride, l.pad, l.window, l.in_features, l.out_features}) {
        w.put(std::int32_t(v));
      }
    }
    w.put(std::uint32_t(net->params().size()));
    for (const auto& p : net->params()) {
      w.put(std::uint64_t(p.size()));
      for (T v : p.values()) w.put(v);
    }
  }
  return w.release();
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  r.require(4, "magic");
  if (!r.tag_matches("MRCK")) throw FormatError("magic", "not a checkpoint file");
  r.skip(4, "magic");
  Checkpoint ck;
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw FormatError("version", fmt::format("unsupported version {}", version));
  ck.seed = r.get<std::uint64_t>("seed");
  ck.scalar_bytes = r.get<std::uint32_t>("precision");
  if (ck.scalar_bytes != 4 && ck.scalar_bytes != 8) throw FormatError("precision", "scalar width must be 4 or 8");
  const auto meta_n = r.get<std::uint32_t>("metadata");
  for (std::uint32_t i = 0; i < meta_n; ++i) {
    auto key = get_string(r, "metadata");
    ck.metadata[key] = get_string(r, "metadata");
  }
  const auto net_n = r.get<std::uint32_t>("networks");
  for (std::uint32_t n = 0; n < net_n; ++n) {
    const auto rank = r.get<std::uint32_t>("network shape");
    if (rank > 8) throw FormatError("network shape", "implausible input rank");
    Shape input;
    for (std::uint32_t a = 0; a < rank; ++a) input.push_back(int(r.get<std::uint32_t>("network shape")));
    const auto layer_n = r.get<std::uint32_t>("layers");
    if (layer_n > 4096) throw FormatError("layers", "implausible layer count");
    std::vector<LayerSpec> layers;
    for (std::uint32_t l = 0; l < layer_n; ++l) {
      LayerSpec s;
      const auto kind = r.get<std::uint8_t>("layers");
      if (kind > std::uint8_t(LayerKind::Dense)) throw FormatError("layers", fmt::format("unknown layer kind {}", kind));
      s.kind = static_cast<LayerKind>(kind);
      for (int* field : {&s.in_channels, &s.out_channels, &s.kernel, &s.stride, &s.pad, &s.window, &s.in_features,
                         &s.out_features}) {
        *field = r.get<std::int32_t>("layers");
      }
      layers.push_back(s);
    }
    std::optional<Network<double>> net;
    try {
      net.emplace(input, layers);
    } catch (const ShapeError& e) {
      throw FormatError("layers", e.what());
    }
    const auto param_n = r.get<std::uint32_t>("parameters");
    if (param_n != net->params().size()) throw FormatError("parameters", "parameter tensor count mismatch");
    for (auto& p : net->params()) {
      const auto count = r.get<std::uint64_t>("parameters");
      if (count != p.size()) throw FormatError("parameters", "parameter tensor size mismatch");
      r.require(count * ck.scalar_bytes, "parameters");
      for (auto& v : p.values()) v = ck.scalar_bytes == 4 ? double(r.get<float>("parameters")) : r.get<double>("parameters");
    }
    ck.networks.push_back(std::move(*net));
  }
  if (r.remaining() != 0) throw FormatError("trailer", "unexpected trailing bytes");
  return ck;
}

template class Network<float>;
template class Network<double>;
template void accumulate(std::vector<BasicTensor<float>>&, const std::vector<BasicTensor<float>>&);
template void accumulate(std::vector<BasicTensor<double>>&, const std::vector<BasicTensor<double>>&);
template void scale(std::vector<BasicTensor<float>>&, double);
template void scale(std::vector<BasicTensor<double>>&, double);
template double train_step(Network<float>&, std::span<const BasicTensor<float>* const>, std::span<const std::size_t>,
                           double);
template double train_step(Network<double>&, std::span<const BasicTensor<double>* const>,
                           std::span<const std::size_t>, double);
template std::vector<std::byte> encode_checkpoint(std::uint64_t, const std::map<std::string, std::string>&,
                                                  std::span<const Network<float>* const>);
template std::vector<std::byte> encode_checkpoint(std::uint64_t, const std::map<std::string, std::string>&,
                                                  std::span<const Network<double>* const>);

}  // namespace mrvox
