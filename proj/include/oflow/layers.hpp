#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "oflow/tensor.hpp"

namespace oflow {

// Every convolution in both networks uses a 5x5 window at stride 1 with
// 2 pixels of zero padding, so spatial dimensions are preserved.
inline constexpr int kConvKernel = 5;
inline constexpr int kConvPad = 2;

enum class Phase { Train, Inference };

template <typename T>
struct ConvParamsT {
  // Weight layout maps (kh, kw, c_in, c_out) onto the tensor's (n, h, w, c)
  // axes, so each (kh, kw) slice is a contiguous c_in x c_out matrix.
  TensorT<T> weights;
  std::vector<T> bias;  // length c_out

  int c_in() const { return weights.shape.w; }
  int c_out() const { return weights.shape.c; }
};

template <typename T>
struct BatchNormParamsT {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);  // running <- (1 - momentum) * running + momentum * batch
};

using ConvParams = ConvParamsT<float>;
using BatchNormParams = BatchNormParamsT<float>;

template <typename T>
struct ConvGradsT {
  TensorT<T> input;
  TensorT<T> weights;
  std::vector<T> bias;
};

template <typename T>
struct BatchNormGradsT {
  TensorT<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

template <typename T>
struct MaxPoolResultT {
  TensorT<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

// Fan-in scaled uniform init on [-s, s] with s = sqrt(2 / (kh * kw * c_in));
// biases start at zero.
template <typename T>
ConvParamsT<T> make_conv_params(int c_in, int c_out, std::mt19937_64& rng);

// gamma = 1, beta = 0, running stats at the identity transform.
template <typename T>
BatchNormParamsT<T> make_batchnorm_params(int channels);

template <typename T>
TensorT<T> conv_forward(const TensorT<T>& input, const ConvParamsT<T>& p);

template <typename T>
ConvGradsT<T> conv_backward(const TensorT<T>& input, const ConvParamsT<T>& p,
                            const TensorT<T>& grad_output);

// Train phase normalizes by per-channel batch statistics over (n, h, w) and
// updates the running stats in place; inference normalizes by running stats.
template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& input, BatchNormParamsT<T>& p, Phase phase);

// Backward of the train-phase forward definition.
template <typename T>
BatchNormGradsT<T> batchnorm_backward(const TensorT<T>& input, const BatchNormParamsT<T>& p,
                                      const TensorT<T>& grad_output);

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input);

// Gradient at exactly 0 is defined as 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& grad_output);

// 2x2 window, stride 2; requires even h and w. Ties resolve to the first
// position in row-major window order.
template <typename T>
MaxPoolResultT<T> maxpool_forward(const TensorT<T>& input);

template <typename T>
TensorT<T> maxpool_backward(const std::vector<std::size_t>& argmax, const TensorT<T>& grad_output,
                            const Shape& input_shape);

// Doubles h and w with half-pixel-center sampling: the source coordinate of
// destination pixel d is (d + 0.5) / 2 - 0.5, clamped to the borders.
template <typename T>
TensorT<T> bilinear_upsample_forward(const TensorT<T>& input);

// Exact transpose of the forward linear map.
template <typename T>
TensorT<T> bilinear_upsample_backward(const TensorT<T>& grad_output, const Shape& input_shape);

// Channel concatenation; a's channels come first.
template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

// Splits a concat gradient back into the (a, b) channel ranges.
template <typename T>
std::pair<TensorT<T>, TensorT<T>> concat_backward(const TensorT<T>& grad_output, int c_a);

}  // namespace oflow
