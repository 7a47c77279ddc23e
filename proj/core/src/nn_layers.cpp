// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// Layer kernels. Convolutions are cross-correlations (no kernel flip).
#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mrvox/nn_core.hpp"

namespace mrvox {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error("Rng::below needs n > 0");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = next();
  while (v >= limit) v = next();
  return v % n;
}

namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

// Output positions o in [0, out) with 0 <= o*stride + offset - pad < in.
struct Span1 {
  int lo;
  int hi;  // exclusive
};
Span1 valid_range(int in, int out, int stride, int pad, int offset) {
  const int lo = std::max(0, ceil_div(pad - offset, stride));
  const int hi = std::min(out, floor_div(in - 1 + pad - offset, stride) + 1);
  return {lo, std::max(lo, hi)};
}

int conv_out(int in, int kernel, int stride, int pad, const char* axis) {
  const int span = in + 2 * pad - kernel;
  if (span < 0 || span % stride != 0) {
    throw ShapeError(fmt::format("conv3d: ({} + 2*{} - {}) is not a non-negative multiple of stride {} along {}", in,
                                 pad, kernel, stride, axis));
  }
  return span / stride + 1;
}

template <class T>
void check_conv(const BasicTensor<T>& x, const BasicTensor<T>& w) {
  if (x.rank() != 4) throw ShapeError("conv3d input must be [C, D, H, W], got " + shape_string(x.shape()));
  if (w.rank() != 5 || w.dim(2) != w.dim(3) || w.dim(3) != w.dim(4)) {
    throw ShapeError("conv3d weights must be [Co, Ci, k, k, k], got " + shape_string(w.shape()));
  }
  if (w.dim(1) != x.dim(0)) {
    throw ShapeError(fmt::format("conv3d expects {} input channels, got {}", w.dim(1), x.dim(0)));
  }
}

}  // namespace

template <class T>
BasicTensor<T> conv3d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, int stride,
                              int pad) {
  check_conv(x, w);
  if (stride < 1 || pad < 0) throw ShapeError("conv3d needs stride >= 1 and pad >= 0");
  const int ci_n = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int co_n = w.dim(0), k = w.dim(2);
  if (b.size() != std::size_t(co_n)) throw ShapeError("conv3d bias size must equal output channels");
  const int Do = conv_out(D, k, stride, pad, "depth");
  const int Ho = conv_out(H, k, stride, pad, "height");
  const int Wo = conv_out(W, k, stride, pad, "width");

  BasicTensor<T> y({co_n, Do, Ho, Wo});
  const std::size_t out_plane = std::size_t(Do) * Ho * Wo;
  for (int co = 0; co < co_n; ++co) std::fill_n(y.data() + co * out_plane, out_plane, b[std::size_t(co)]);

  for (int co = 0; co < co_n; ++co) {
    for (int ci = 0; ci < ci_n; ++ci) {
      const T* wk = w.data() + (std::size_t(co) * ci_n + ci) * k * k * k;
      for (int kd = 0; kd < k; ++kd) {
        const Span1 rd = valid_range(D, Do, stride, pad, kd);
        for (int kh = 0; kh < k; ++kh) {
          const Span1 rh = valid_range(H, Ho, stride, pad, kh);
          for (int kw = 0; kw < k; ++kw) {
            const Span1 rw = valid_range(W, Wo, stride, pad, kw);
            const T wv = wk[(kd * k + kh) * k + kw];
            for (int od = rd.lo; od < rd.hi; ++od) {
              const int id = od * stride + kd - pad;
              for (int oh = rh.lo; oh < rh.hi; ++oh) {
                const int ih = oh * stride + kh - pad;
                T* yr = y.data() + ((std::size_t(co) * Do + od) * Ho + oh) * Wo;
                const T* xr = x.data() + ((std::size_t(ci) * D + id) * H + ih) * W;
                if (stride == 1) {
                  const T* xs = xr + (kw - pad);
                  for (int ow = rw.lo; ow < rw.hi; ++ow) yr[ow] += wv * xs[ow];
                } else {
                  for (int ow = rw.lo; ow < rw.hi; ++ow) yr[ow] += wv * xr[ow * stride + kw - pad];
                }
              }
            }
          }
        }
      }
    }
  }
  return y;
}

template <class T>
Conv3dGrads<T> conv3d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride, int pad,
                               const BasicTensor<T>& dy, bool need_dx) {
  check_conv(x, w);
  const int ci_n = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int co_n = w.dim(0), k = w.dim(2);
  const int Do = conv_out(D, k, stride, pad, "depth");
  const int Ho = conv_out(H, k, stride, pad, "height");
  const int Wo = conv_out(W, k, stride, pad, "width");
  if (dy.shape() != Shape{co_n, Do, Ho, Wo}) {
    throw ShapeError("conv3d backward: upstream gradient shape " + shape_string(dy.shape()) + " does not match output");
  }

  Conv3dGrads<T> g{need_dx ? BasicTensor<T>(x.shape()) : BasicTensor<T>(), BasicTensor<T>(w.shape()),
                   BasicTensor<T>({co_n})};
  const std::size_t out_plane = std::size_t(Do) * Ho * Wo;
  for (int co = 0; co < co_n; ++co) {
    T acc = 0;
    const T* d = dy.data() + co * out_plane;
    for (std::size_t i = 0; i < out_plane; ++i) acc += d[i];
    g.db[std::size_t(co)] = acc;
  }

  for (int co = 0; co < co_n; ++co) {
    for (int ci = 0; ci < ci_n; ++ci) {
      const std::size_t wbase = (std::size_t(co) * ci_n + ci) * k * k * k;
      for (int kd = 0; kd < k; ++kd) {
        const Span1 rd = valid_range(D, Do, stride, pad, kd);
        for (int kh = 0; kh < k; ++kh) {
          const Span1 rh = valid_range(H, Ho, stride, pad, kh);
          for (int kw = 0; kw < k; ++kw) {
            const Span1 rw = valid_range(W, Wo, stride, pad, kw);
            const std::size_t widx = wbase + (kd * k + kh) * k + kw;
            const T wv = w[widx];
            T acc = 0;
            for (int od = rd.lo; od < rd.hi; ++od) {
              const int id = od * stride + kd - pad;
              for (int oh = rh.lo; oh < rh.hi; ++oh) {
                const int ih = oh * stride + kh - pad;
                const T* dr = dy.data() + ((std::size_t(co) * Do + od) * Ho + oh) * Wo;
                const std::size_t xrow = ((std::size_t(ci) * D + id) * H + ih) * W;
                const T* xr = x.data() + xrow;
                if (stride == 1) {
                  const T* xs = xr + (kw - pad);
                  for (int ow = rw.lo; ow < rw.hi; ++ow) acc += dr[ow] * xs[ow];
                  if (need_dx) {
                    T* dxs = g.dx.data() + xrow + (kw - pad);
                    for (int ow = rw.lo; ow < rw.hi; ++ow) dxs[ow] += wv * dr[ow];
                  }
                } else {
                  for (int ow = rw.lo; ow < rw.hi; ++ow) acc += dr[ow] * xr[ow * stride + kw - pad];
                  if (need_dx) {
                    T* dxr = g.dx.data() + xrow;
                    for (int ow = rw.lo; ow < rw.hi; ++ow) dxr[ow * stride + kw - pad] += wv * dr[ow];
                  }
                }
              }
            }
            g.dw[widx] = acc;
          }
        }
      }
    }
  }
  return g;
}

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.values()) v = v > T(0) ? v : T(0);
  return y;
}

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  if (x.shape() != dy.shape()) throw ShapeError("relu backward: shape mismatch");
  BasicTensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <class T>
MaxPoolResult<T> maxpool3d_forward(const BasicTensor<T>& x, int window) {
  if (x.rank() != 4) throw ShapeError("maxpool3d input must be [C, D, H, W], got " + shape_string(x.shape()));
  if (window < 1) throw ShapeError("maxpool3d window must be >= 1");
  const int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Do = D / window, Ho = H / window, Wo = W / window;
  if (Do < 1 || Ho < 1 || Wo < 1) throw ShapeError("maxpool3d window larger than input " + shape_string(x.shape()));
  MaxPoolResult<T> r{BasicTensor<T>({C, Do, Ho, Wo}), std::vector<std::uint32_t>(std::size_t(C) * Do * Ho * Wo)};
  std::size_t o = 0;
  for (int c = 0; c < C; ++c) {
    for (int od = 0; od < Do; ++od) {
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow, ++o) {
          std::size_t best = 0;
          T best_v = -std::numeric_limits<T>::infinity();
          bool first = true;
          // Scan in flat order so the first maximum has the lowest index.
          for (int a = 0; a < window; ++a) {
            for (int bb = 0; bb < window; ++bb) {
              for (int cc = 0; cc < window; ++cc) {
                const std::size_t idx =
                    ((std::size_t(c) * D + od * window + a) * H + oh * window + bb) * W + ow * window + cc;
                if (first || x[idx] > best_v) {
                  best_v = x[idx];
                  best = idx;
                  first = false;
                }
              }
            }
          }
          r.y[o] = best_v;
          r.argmax[o] = std::uint32_t(best);
        }
      }
    }
  }
  return r;
}

template <class T>
BasicTensor<T> maxpool3d_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                                  const BasicTensor<T>& dy) {
  if (argmax.size() != dy.size()) throw ShapeError("maxpool3d backward: argmax/gradient size mismatch");
  BasicTensor<T> dx(input_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

template <class T>
BasicTensor<T> flatten_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  y.reshape({int(x.size())});
  return y;
}

template <class T>
BasicTensor<T> flatten_backward(const Shape& input_shape, const BasicTensor<T>& dy) {
  BasicTensor<T> dx = dy;
  dx.reshape(input_shape);
  return dx;
}

template <class T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  if (x.rank() != 1) throw ShapeError("dense input must be rank 1, got " + shape_string(x.shape()));
  if (w.rank() != 2 || w.dim(1) != x.dim(0)) {
    throw ShapeError(fmt::format("dense weights {} do not accept input of size {}", shape_string(w.shape()), x.size()));
  }
  const int out = w.dim(0), in = w.dim(1);
  if (b.size() != std::size_t(out)) throw ShapeError("dense bias size must equal output features");
  BasicTensor<T> y({out});
  for (int o = 0; o < out; ++o) {
    const T* wr = w.data() + std::size_t(o) * in;
    T acc = 0;
    for (int i = 0; i < in; ++i) acc += wr[i] * x[std::size_t(i)];
    y[std::size_t(o)] = acc + b[std::size_t(o)];
  }
  return y;
}

template <class T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& dy) {
  if (x.rank() != 1 || w.rank() != 2 || w.dim(1) != x.dim(0) || dy.rank() != 1 || dy.dim(0) != w.dim(0)) {
    throw ShapeError("dense backward: shape mismatch");
  }
  const int out = w.dim(0), in = w.dim(1);
  DenseGrads<T> g{BasicTensor<T>({in}), BasicTensor<T>(w.shape()), dy};
  for (int o = 0; o < out; ++o) {
    const T d = dy[std::size_t(o)];
    const T* wr = w.data() + std::size_t(o) * in;
    T* dwr = g.dw.data() + std::size_t(o) * in;
    for (int i = 0; i < in; ++i) {
      dwr[i] = d * x[std::size_t(i)];
      g.dx[std::size_t(i)] += wr[i] * d;
    }
  }
  return g;
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  if (logits.size() == 0) throw ShapeError("softmax of an empty tensor");
  double m = -std::numeric_limits<double>::infinity();
  for (auto v : logits.values()) m = std::max(m, double(v));
  double sum = 0.0;
  std::vector<double> e(logits.size());
  for (std::size_t i = 0; i < e.size(); ++i) sum += e[i] = std::exp(double(logits[i]) - m);
  BasicTensor<T> p(logits.shape());
  for (std::size_t i = 0; i < e.size(); ++i) p[i] = T(e[i] / sum);
  return p;
}

template <class T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::size_t label) {
  if (logits.rank() != 1 || logits.size() < 2) throw ShapeError("cross-entropy needs rank-1 logits with K >= 2");
  if (label >= logits.size()) throw IndexError(fmt::format("label {} >= class count {}", label, logits.size()));
  double m = -std::numeric_limits<double>::infinity();
  for (auto v : logits.values()) m = std::max(m, double(v));
  double sum = 0.0;
  for (auto v : logits.values()) sum += std::exp(double(v) - m);
  const double log_sum = std::log(sum);
  LossResult<T> r{log_sum - (double(logits[label]) - m), BasicTensor<T>(logits.shape())};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.dlogits[i] = T(std::exp(double(logits[i]) - m - log_sum) - (i == label ? 1.0 : 0.0));
  }
  return r;
}

template <class T>
void sgd_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, double lr) {
  if (params.size() != grads.size()) throw ShapeError("sgd: parameter/gradient count mismatch");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].shape() != grads[p].shape()) {
      throw ShapeError("sgd: parameter " + shape_string(params[p].shape()) + " vs gradient " +
                       shape_string(grads[p].shape()));
    }
  }
  const T rate = T(lr);
  for (std::size_t p = 0; p < params.size(); ++p) {
    T* v = params[p].data();
    const T* g = grads[p].data();
    for (std::size_t i = 0; i < params[p].size(); ++i) v[i] -= rate * g[i];
  }
}

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

template <class T>
std::size_t argmax(const BasicTensor<T>& values) {
  if (values.size() == 0) throw ShapeError("argmax of an empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

#define MRVOX_INSTANTIATE_LAYERS(T)                                                                              \
  template BasicTensor<T> conv3d_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, int, \
                                         int);                                                                   \
  template Conv3dGrads<T> conv3d_backward(const BasicTensor<T>&, const BasicTensor<T>&, int, int,               \
                                          const BasicTensor<T>&, bool);                                          \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template MaxPoolResult<T> maxpool3d_forward(const BasicTensor<T>&, int);                                       \
  template BasicTensor<T> maxpool3d_backward(const Shape&, std::span<const std::uint32_t>, const BasicTensor<T>&); \
  template BasicTensor<T> flatten_forward(const BasicTensor<T>&);                                                \
  template BasicTensor<T> flatten_backward(const Shape&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> dense_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);    \
  template DenseGrads<T> dense_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);    \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                        \
  template LossResult<T> softmax_cross_entropy(const BasicTensor<T>&, std::size_t);                              \
  template void sgd_step(std::span<BasicTensor<T>>, std::span<const BasicTensor<T>>, double);                    \
  template std::size_t argmax(const BasicTensor<T>&);

MRVOX_INSTANTIATE_LAYERS(float)
MRVOX_INSTANTIATE_LAYERS(double)

#undef MRVOX_INSTANTIATE_LAYERS

}  // namespace mrvox
