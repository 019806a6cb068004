#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oflow/layers.hpp"
#include "oflow/tensor.hpp"

namespace oflow {

enum class LayerKind : std::uint8_t {
  ConvBlock = 0,   // conv 5x5 + batchnorm + relu
  MaxPool = 1,     // 2x2, stride 2
  BilinearUp = 2,  // 2x resize
  Concat = 3,      // channel concat with an earlier layer's output
  Predict = 4,     // plain conv 5x5 to the output channels
};

struct LayerSpec {
  LayerKind kind;
  int c_out = 0;        // conv-block / predict output channels
  int skip_source = -1; // concat: index of the earlier layer supplying the skip
};

template <typename T>
struct LayerParamsT {
  std::optional<ConvParamsT<T>> conv;
  std::optional<BatchNormParamsT<T>> bn;
};

template <typename T>
struct NetworkT {
  std::string name;
  int in_channels = 8;
  std::vector<LayerSpec> layers;
  std::vector<LayerParamsT<T>> params;  // parallel to layers
};

using Network = NetworkT<float>;
using NetworkD = NetworkT<double>;

// Validates the spec list (concat sources must point at earlier layers) and
// initializes parameters from the seed.
template <typename T>
NetworkT<T> build_network(std::string name, int in_channels, std::vector<LayerSpec> specs,
                          std::uint64_t seed);

// Six full-resolution conv blocks over the 8-channel input, then a 2-channel
// prediction conv. Channel schedule 8 -> 64 -> 128 -> 256 -> 256 -> 128 -> 64 -> 2.
Network build_plainnet(std::uint64_t seed);

// Encoder of four conv-block + maxpool stages (32, 64, 128, 256 channels),
// one bottleneck conv block at 1/16 resolution, then four rounds of bilinear
// 2x upsample + concat with the same-resolution encoder feature + conv block
// shrinking channels to ceil(concat/3), and the 2-channel prediction conv.
Network build_finalnet(std::uint64_t seed);

template <typename T>
struct LayerCacheT {
  std::shared_ptr<const TensorT<T>> input;
  std::shared_ptr<const TensorT<T>> conv_out;  // conv blocks: pre-batchnorm
  std::shared_ptr<const TensorT<T>> bn_out;    // conv blocks: pre-relu
  std::vector<std::size_t> argmax;             // maxpool
  Shape input_shape;
  Shape output_shape;
  int concat_ca = 0;  // channels taken from the main path
};

template <typename T>
struct ForwardCacheT {
  std::string net_name;
  std::size_t layer_count = 0;
  Phase phase = Phase::Inference;
  std::vector<LayerCacheT<T>> layers;
};

using ForwardCache = ForwardCacheT<float>;

// Diagnostics hook: zero the skip operand of the listed concat layers during
// forward. A cache produced with ablations active is not valid for backward.
struct ForwardOptions {
  std::vector<int> zero_skip_layers;
};

// Runs the graph; train phase updates batchnorm running statistics. Pass a
// cache pointer to retain the activations backward needs.
template <typename T>
TensorT<T> forward(NetworkT<T>& net, const TensorT<T>& input, Phase phase,
                   ForwardCacheT<T>* cache = nullptr, const ForwardOptions* options = nullptr);

// Gradients for every trainable parameter array, aligned with
// parameter_arrays(). Skip-path gradients accumulate additively into their
// source layer.
template <typename T>
std::vector<std::vector<T>> backward(const NetworkT<T>& net, const ForwardCacheT<T>& cache,
                                     const TensorT<T>& grad_flow);

// Trainable parameter storage in canonical order: per layer, conv weights,
// conv bias, then batchnorm gamma and beta. Running statistics are not
// trainable and are excluded.
template <typename T>
std::vector<std::vector<T>*> parameter_arrays(NetworkT<T>& net);

template <typename T>
std::size_t parameter_count(const NetworkT<T>& net);

// Number of 5x5 filters (sum of conv output channels, prediction included).
template <typename T>
int conv_filter_count(const NetworkT<T>& net);

// Human-readable layer table plus filter/parameter totals. For plainnet this
// also reports the deviation from the 906-filter design target and the
// parameter-count discrepancy, which is never silently dropped.
template <typename T>
std::string describe(const NetworkT<T>& net);

// Double-precision clone used by finite-difference checks.
NetworkD widen(const Network& net);

// Stream format: "OFNW" magic, version byte, name, in_channels, layer table,
// then per-layer tensor dumps (weights, bias, gamma, beta, running stats).
void save_network(std::ostream& os, const Network& net);
Network load_network(std::istream& is);

}  // namespace oflow
