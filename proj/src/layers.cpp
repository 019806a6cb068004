#include "oflow/layers.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace oflow {

namespace {

template <typename T>
void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (beta == T(0))
      for (int i = 0; i < m; ++i) std::fill(c + static_cast<std::size_t>(i) * ldc,
                                            c + static_cast<std::size_t>(i) * ldc + n, T(0));
    return;
  }
  if constexpr (std::is_same_v<T, float>)
    cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  else
    cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// dst(n, y, x, c) = src(n, y + dy, x + dx, c), zero where out of bounds.
template <typename T>
void shift_spatial(const TensorT<T>& src, int dy, int dx, TensorT<T>& dst) {
  const int h = src.shape.h, w = src.shape.w, c = src.shape.c;
  std::fill(dst.data.begin(), dst.data.end(), T(0));
  const int y_begin = std::max(0, -dy), y_end = std::min(h, h - dy);
  const int x_begin = std::max(0, -dx), x_end = std::min(w, w - dx);
  if (y_begin >= y_end || x_begin >= x_end) return;
  const std::size_t row_elems = static_cast<std::size_t>(x_end - x_begin) * c;
  for (int n = 0; n < src.shape.n; ++n)
    for (int y = y_begin; y < y_end; ++y)
      std::memcpy(&dst.data[dst.index(n, y, x_begin, 0)],
                  &src.data[src.index(n, y + dy, x_begin + dx, 0)], row_elems * sizeof(T));
}

template <typename T>
void check_conv_args(const TensorT<T>& input, const ConvParamsT<T>& p) {
  if (p.weights.shape.n != kConvKernel || p.weights.shape.h != kConvKernel)
    throw ShapeError("conv: weights must be 5x5, got " + to_string(p.weights.shape));
  if (input.shape.c != p.c_in())
    throw ShapeError("conv: input has " + std::to_string(input.shape.c) +
                     " channels, weights expect " + std::to_string(p.c_in()));
  if (static_cast<int>(p.bias.size()) != p.c_out())
    throw ShapeError("conv: bias length does not match output channels");
  const std::size_t pixels =
      static_cast<std::size_t>(input.shape.n) * input.shape.h * input.shape.w;
  if (pixels > static_cast<std::size_t>(std::numeric_limits<int>::max()))
    throw SizeError("conv: input too large for the GEMM backend");
}

}  // namespace

template <typename T>
ConvParamsT<T> make_conv_params(int c_in, int c_out, std::mt19937_64& rng) {
  ConvParamsT<T> p;
  p.weights = TensorT<T>(Shape{kConvKernel, kConvKernel, c_in, c_out});
  const double scale = std::sqrt(2.0 / (kConvKernel * kConvKernel * std::max(c_in, 1)));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (T& w : p.weights.data) w = static_cast<T>(dist(rng));
  p.bias.assign(c_out, T(0));
  return p;
}

template <typename T>
BatchNormParamsT<T> make_batchnorm_params(int channels) {
  BatchNormParamsT<T> p;
  p.gamma.assign(channels, T(1));
  p.beta.assign(channels, T(0));
  p.running_mean.assign(channels, T(0));
  p.running_var.assign(channels, T(1));
  return p;
}

template <typename T>
TensorT<T> conv_forward(const TensorT<T>& input, const ConvParamsT<T>& p) {
  check_conv_args(input, p);
  const int c_in = p.c_in(), c_out = p.c_out();
  const Shape out_shape{input.shape.n, input.shape.h, input.shape.w, c_out};
  TensorT<T> out(out_shape);
  const int pixels = static_cast<int>(out_shape.total() / std::max<std::size_t>(c_out, 1));
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = p.bias[i % c_out];
  if (input.empty() || out.empty()) return out;

  TensorT<T> shifted(input.shape);
  for (int ky = 0; ky < kConvKernel; ++ky) {
    for (int kx = 0; kx < kConvKernel; ++kx) {
      shift_spatial(input, ky - kConvPad, kx - kConvPad, shifted);
      const T* w_slice = &p.weights.data[p.weights.index(ky, kx, 0, 0)];
      gemm<T>(CblasNoTrans, CblasNoTrans, pixels, c_out, c_in, T(1), shifted.data.data(), c_in,
              w_slice, c_out, T(1), out.data.data(), c_out);
    }
  }
  return out;
}

template <typename T>
ConvGradsT<T> conv_backward(const TensorT<T>& input, const ConvParamsT<T>& p,
                            const TensorT<T>& grad_output) {
  check_conv_args(input, p);
  const Shape expect{input.shape.n, input.shape.h, input.shape.w, p.c_out()};
  detail::require_same_shape(grad_output.shape, expect, "conv_backward");

  const int c_in = p.c_in(), c_out = p.c_out();
  const int pixels = static_cast<int>(
      static_cast<std::size_t>(input.shape.n) * input.shape.h * input.shape.w);

  ConvGradsT<T> g;
  g.input = TensorT<T>(input.shape);
  g.weights = TensorT<T>(p.weights.shape);
  g.bias.assign(c_out, T(0));

  std::vector<double> bias_acc(c_out, 0.0);
  for (std::size_t i = 0; i < grad_output.data.size(); ++i)
    bias_acc[i % c_out] += static_cast<double>(grad_output.data[i]);
  for (int co = 0; co < c_out; ++co) g.bias[co] = static_cast<T>(bias_acc[co]);
  if (input.empty() || grad_output.empty()) return g;

  TensorT<T> shifted(input.shape);
  TensorT<T> shifted_go(grad_output.shape);
  for (int ky = 0; ky < kConvKernel; ++ky) {
    for (int kx = 0; kx < kConvKernel; ++kx) {
      const int dy = ky - kConvPad, dx = kx - kConvPad;
      // d/dw over the same shifted view the forward pass used
      shift_spatial(input, dy, dx, shifted);
      T* gw_slice = &g.weights.data[g.weights.index(ky, kx, 0, 0)];
      gemm<T>(CblasTrans, CblasNoTrans, c_in, c_out, pixels, T(1), shifted.data.data(), c_in,
              grad_output.data.data(), c_out, T(0), gw_slice, c_out);
      // d/dinput scatters grad_output back through the flipped offsets
      shift_spatial(grad_output, -dy, -dx, shifted_go);
      const T* w_slice = &p.weights.data[p.weights.index(ky, kx, 0, 0)];
      gemm<T>(CblasNoTrans, CblasTrans, pixels, c_in, c_out, T(1), shifted_go.data.data(), c_out,
              w_slice, c_out, T(1), g.input.data.data(), c_in);
    }
  }
  return g;
}

template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& input, BatchNormParamsT<T>& p, Phase phase) {
  const int c = input.shape.c;
  if (c != static_cast<int>(p.gamma.size()))
    throw ShapeError("batchnorm: input has " + std::to_string(c) + " channels, params have " +
                     std::to_string(p.gamma.size()));
  const std::size_t m = input.shape.total() / std::max<std::size_t>(c, 1);

  std::vector<double> scale(c), shift(c);
  if (phase == Phase::Train) {
    if (m == 0) throw DomainError("batchnorm: zero-size batch in train phase");
    std::vector<double> sum(c, 0.0), sum_sq(c, 0.0);
    for (std::size_t i = 0; i < input.data.size(); ++i) {
      const double x = input.data[i];
      sum[i % c] += x;
      sum_sq[i % c] += x * x;
    }
    for (int ch = 0; ch < c; ++ch) {
      const double mean = sum[ch] / static_cast<double>(m);
      const double var = std::max(0.0, sum_sq[ch] / static_cast<double>(m) - mean * mean);
      const double inv = 1.0 / std::sqrt(var + static_cast<double>(p.epsilon));
      scale[ch] = static_cast<double>(p.gamma[ch]) * inv;
      shift[ch] = static_cast<double>(p.beta[ch]) - mean * scale[ch];
      const double mom = p.momentum;
      p.running_mean[ch] = static_cast<T>((1.0 - mom) * p.running_mean[ch] + mom * mean);
      p.running_var[ch] = static_cast<T>((1.0 - mom) * p.running_var[ch] + mom * var);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      const double inv =
          1.0 / std::sqrt(static_cast<double>(p.running_var[ch]) + static_cast<double>(p.epsilon));
      scale[ch] = static_cast<double>(p.gamma[ch]) * inv;
      shift[ch] = static_cast<double>(p.beta[ch]) -
                  static_cast<double>(p.running_mean[ch]) * scale[ch];
    }
  }

  TensorT<T> out(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    const int ch = static_cast<int>(i % c);
    out.data[i] = static_cast<T>(static_cast<double>(input.data[i]) * scale[ch] + shift[ch]);
  }
  return out;
}

template <typename T>
BatchNormGradsT<T> batchnorm_backward(const TensorT<T>& input, const BatchNormParamsT<T>& p,
                                      const TensorT<T>& grad_output) {
  detail::require_same_shape(grad_output.shape, input.shape, "batchnorm_backward");
  const int c = input.shape.c;
  if (c != static_cast<int>(p.gamma.size()))
    throw ShapeError("batchnorm_backward: channel mismatch");
  const std::size_t m = input.shape.total() / std::max<std::size_t>(c, 1);
  if (m == 0) throw DomainError("batchnorm_backward: zero-size batch");

  std::vector<double> sum(c, 0.0), sum_sq(c, 0.0);
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    const double x = input.data[i];
    sum[i % c] += x;
    sum_sq[i % c] += x * x;
  }
  std::vector<double> mean(c), inv(c);
  for (int ch = 0; ch < c; ++ch) {
    mean[ch] = sum[ch] / static_cast<double>(m);
    const double var = std::max(0.0, sum_sq[ch] / static_cast<double>(m) - mean[ch] * mean[ch]);
    inv[ch] = 1.0 / std::sqrt(var + static_cast<double>(p.epsilon));
  }

  // Per-channel reductions of grad_output and grad_output * normalized input.
  std::vector<double> sum_go(c, 0.0), sum_go_xhat(c, 0.0);
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    const int ch = static_cast<int>(i % c);
    const double go = grad_output.data[i];
    const double xhat = (static_cast<double>(input.data[i]) - mean[ch]) * inv[ch];
    sum_go[ch] += go;
    sum_go_xhat[ch] += go * xhat;
  }

  BatchNormGradsT<T> g;
  g.input = TensorT<T>(input.shape);
  g.gamma.resize(c);
  g.beta.resize(c);
  for (int ch = 0; ch < c; ++ch) {
    g.gamma[ch] = static_cast<T>(sum_go_xhat[ch]);
    g.beta[ch] = static_cast<T>(sum_go[ch]);
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    const int ch = static_cast<int>(i % c);
    const double xhat = (static_cast<double>(input.data[i]) - mean[ch]) * inv[ch];
    const double dxhat = static_cast<double>(grad_output.data[i]) * p.gamma[ch];
    const double centered = dxhat - inv_m * p.gamma[ch] * sum_go[ch] -
                            xhat * inv_m * p.gamma[ch] * sum_go_xhat[ch];
    g.input.data[i] = static_cast<T>(inv[ch] * centered);
  }
  return g;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input) {
  TensorT<T> out(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i)
    out.data[i] = input.data[i] > T(0) ? input.data[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& grad_output) {
  detail::require_same_shape(grad_output.shape, input.shape, "relu_backward");
  TensorT<T> out(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i)
    out.data[i] = input.data[i] > T(0) ? grad_output.data[i] : T(0);
  return out;
}

template <typename T>
MaxPoolResultT<T> maxpool_forward(const TensorT<T>& input) {
  const auto& s = input.shape;
  if (s.h % 2 != 0 || s.w % 2 != 0)
    throw ShapeError("maxpool: spatial dims must be even, got " + to_string(s));
  MaxPoolResultT<T> r;
  r.output = TensorT<T>(Shape{s.n, s.h / 2, s.w / 2, s.c});
  r.argmax.assign(r.output.data.size(), 0);
  for (int n = 0; n < s.n; ++n)
    for (int oy = 0; oy < s.h / 2; ++oy)
      for (int ox = 0; ox < s.w / 2; ++ox)
        for (int c = 0; c < s.c; ++c) {
          std::size_t best_idx = input.index(n, 2 * oy, 2 * ox, c);
          T best = input.data[best_idx];
          for (int wy = 0; wy < 2; ++wy)
            for (int wx = 0; wx < 2; ++wx) {
              const std::size_t idx = input.index(n, 2 * oy + wy, 2 * ox + wx, c);
              if (input.data[idx] > best) {
                best = input.data[idx];
                best_idx = idx;
              }
            }
          const std::size_t out_idx = r.output.index(n, oy, ox, c);
          r.output.data[out_idx] = best;
          r.argmax[out_idx] = best_idx;
        }
  return r;
}

template <typename T>
TensorT<T> maxpool_backward(const std::vector<std::size_t>& argmax, const TensorT<T>& grad_output,
                            const Shape& input_shape) {
  const Shape expect{input_shape.n, input_shape.h / 2, input_shape.w / 2, input_shape.c};
  detail::require_same_shape(grad_output.shape, expect, "maxpool_backward");
  if (argmax.size() != grad_output.data.size())
    throw StateError("maxpool_backward: argmax cache does not match grad_output");
  TensorT<T> g(input_shape);
  for (std::size_t i = 0; i < grad_output.data.size(); ++i) g.data[argmax[i]] += grad_output.data[i];
  return g;
}

namespace {

struct AxisSample {
  int lo, hi;
  double frac;  // weight of hi; (1 - frac) goes to lo
};

// Half-pixel-center source coordinates for a 2x destination axis.
std::vector<AxisSample> upsample_axis(int src_size) {
  std::vector<AxisSample> samples(static_cast<std::size_t>(src_size) * 2);
  for (int d = 0; d < src_size * 2; ++d) {
    double s = (d + 0.5) / 2.0 - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
    const int lo = static_cast<int>(s);
    const int hi = std::min(lo + 1, src_size - 1);
    samples[d] = AxisSample{lo, hi, s - lo};
  }
  return samples;
}

}  // namespace

template <typename T>
TensorT<T> bilinear_upsample_forward(const TensorT<T>& input) {
  const auto& s = input.shape;
  TensorT<T> out(Shape{s.n, s.h * 2, s.w * 2, s.c});
  if (input.empty()) return out;
  const auto ys = upsample_axis(s.h);
  const auto xs = upsample_axis(s.w);
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h * 2; ++y) {
      const auto& ay = ys[y];
      for (int x = 0; x < s.w * 2; ++x) {
        const auto& ax = xs[x];
        const double w00 = (1.0 - ay.frac) * (1.0 - ax.frac);
        const double w01 = (1.0 - ay.frac) * ax.frac;
        const double w10 = ay.frac * (1.0 - ax.frac);
        const double w11 = ay.frac * ax.frac;
        for (int c = 0; c < s.c; ++c)
          out.at(n, y, x, c) = static_cast<T>(
              w00 * input.at(n, ay.lo, ax.lo, c) + w01 * input.at(n, ay.lo, ax.hi, c) +
              w10 * input.at(n, ay.hi, ax.lo, c) + w11 * input.at(n, ay.hi, ax.hi, c));
      }
    }
  return out;
}

template <typename T>
TensorT<T> bilinear_upsample_backward(const TensorT<T>& grad_output, const Shape& input_shape) {
  const Shape expect{input_shape.n, input_shape.h * 2, input_shape.w * 2, input_shape.c};
  detail::require_same_shape(grad_output.shape, expect, "bilinear_upsample_backward");
  TensorT<T> g(input_shape);
  if (g.empty()) return g;
  const auto ys = upsample_axis(input_shape.h);
  const auto xs = upsample_axis(input_shape.w);
  for (int n = 0; n < input_shape.n; ++n)
    for (int y = 0; y < input_shape.h * 2; ++y) {
      const auto& ay = ys[y];
      for (int x = 0; x < input_shape.w * 2; ++x) {
        const auto& ax = xs[x];
        const double w00 = (1.0 - ay.frac) * (1.0 - ax.frac);
        const double w01 = (1.0 - ay.frac) * ax.frac;
        const double w10 = ay.frac * (1.0 - ax.frac);
        const double w11 = ay.frac * ax.frac;
        for (int c = 0; c < input_shape.c; ++c) {
          const T go = grad_output.at(n, y, x, c);
          g.at(n, ay.lo, ax.lo, c) += static_cast<T>(w00 * go);
          g.at(n, ay.lo, ax.hi, c) += static_cast<T>(w01 * go);
          g.at(n, ay.hi, ax.lo, c) += static_cast<T>(w10 * go);
          g.at(n, ay.hi, ax.hi, c) += static_cast<T>(w11 * go);
        }
      }
    }
  return g;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape.n != b.shape.n || a.shape.h != b.shape.h || a.shape.w != b.shape.w)
    throw ShapeError("concat: spatial mismatch " + to_string(a.shape) + " vs " +
                     to_string(b.shape));
  TensorT<T> out(Shape{a.shape.n, a.shape.h, a.shape.w, a.shape.c + b.shape.c});
  const int ca = a.shape.c, cb = b.shape.c;
  const std::size_t pixels = out.shape.total() / std::max<std::size_t>(ca + cb, 1);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (ca > 0)
      std::memcpy(&out.data[p * (ca + cb)], &a.data[p * ca], static_cast<std::size_t>(ca) * sizeof(T));
    if (cb > 0)
      std::memcpy(&out.data[p * (ca + cb) + ca], &b.data[p * cb],
                  static_cast<std::size_t>(cb) * sizeof(T));
  }
  return out;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> concat_backward(const TensorT<T>& grad_output, int c_a) {
  if (c_a < 0 || c_a > grad_output.shape.c)
    throw ShapeError("concat_backward: split channel out of range");
  const int ca = c_a, cb = grad_output.shape.c - c_a;
  TensorT<T> ga(Shape{grad_output.shape.n, grad_output.shape.h, grad_output.shape.w, ca});
  TensorT<T> gb(Shape{grad_output.shape.n, grad_output.shape.h, grad_output.shape.w, cb});
  const std::size_t pixels =
      grad_output.shape.total() / std::max<std::size_t>(ca + cb, 1);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (ca > 0)
      std::memcpy(&ga.data[p * ca], &grad_output.data[p * (ca + cb)],
                  static_cast<std::size_t>(ca) * sizeof(T));
    if (cb > 0)
      std::memcpy(&gb.data[p * cb], &grad_output.data[p * (ca + cb) + ca],
                  static_cast<std::size_t>(cb) * sizeof(T));
  }
  return {std::move(ga), std::move(gb)};
}

#define OFLOW_INSTANTIATE_LAYERS(T)                                                              \
  template ConvParamsT<T> make_conv_params<T>(int, int, std::mt19937_64&);                       \
  template BatchNormParamsT<T> make_batchnorm_params<T>(int);                                    \
  template TensorT<T> conv_forward<T>(const TensorT<T>&, const ConvParamsT<T>&);                 \
  template ConvGradsT<T> conv_backward<T>(const TensorT<T>&, const ConvParamsT<T>&,              \
                                          const TensorT<T>&);                                    \
  template TensorT<T> batchnorm_forward<T>(const TensorT<T>&, BatchNormParamsT<T>&, Phase);      \
  template BatchNormGradsT<T> batchnorm_backward<T>(const TensorT<T>&,                           \
                                                    const BatchNormParamsT<T>&,                  \
                                                    const TensorT<T>&);                          \
  template TensorT<T> relu_forward<T>(const TensorT<T>&);                                        \
  template TensorT<T> relu_backward<T>(const TensorT<T>&, const TensorT<T>&);                    \
  template MaxPoolResultT<T> maxpool_forward<T>(const TensorT<T>&);                              \
  template TensorT<T> maxpool_backward<T>(const std::vector<std::size_t>&, const TensorT<T>&,    \
                                          const Shape&);                                         \
  template TensorT<T> bilinear_upsample_forward<T>(const TensorT<T>&);                           \
  template TensorT<T> bilinear_upsample_backward<T>(const TensorT<T>&, const Shape&);            \
  template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&);                  \
  template std::pair<TensorT<T>, TensorT<T>> concat_backward<T>(const TensorT<T>&, int);

OFLOW_INSTANTIATE_LAYERS(float)
OFLOW_INSTANTIATE_LAYERS(double)

#undef OFLOW_INSTANTIATE_LAYERS

}  // namespace oflow
