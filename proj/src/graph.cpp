#include "oflow/graph.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace oflow {

namespace {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::ConvBlock: return "conv-block";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::BilinearUp: return "bilinear-up";
    case LayerKind::Concat: return "concat";
    case LayerKind::Predict: return "predict";
  }
  return "?";
}

std::string layer_label(int i, LayerKind k) {
  return "layer " + std::to_string(i) + " (" + kind_name(k) + ")";
}

// Output channel width of every layer, validating concat wiring.
std::vector<int> trace_channels(const std::vector<LayerSpec>& specs, int in_channels) {
  std::vector<int> out(specs.size());
  int cur = in_channels;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    switch (s.kind) {
      case LayerKind::ConvBlock:
      case LayerKind::Predict:
        if (s.c_out <= 0)
          throw ShapeError(layer_label(static_cast<int>(i), s.kind) + ": c_out must be positive");
        cur = s.c_out;
        break;
      case LayerKind::MaxPool:
      case LayerKind::BilinearUp:
        break;
      case LayerKind::Concat:
        if (s.skip_source < 0 || s.skip_source >= static_cast<int>(i))
          throw ShapeError(layer_label(static_cast<int>(i), s.kind) +
                           ": skip_source must reference an earlier layer");
        cur += out[s.skip_source];
        break;
    }
    out[i] = cur;
  }
  return out;
}

template <typename T>
void add_into(TensorT<T>& dst, const TensorT<T>& src) {
  if (dst.data.empty()) {
    dst = src;
    return;
  }
  detail::require_same_shape(dst.shape, src.shape, "gradient accumulation");
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw FormatError("network stream: truncated");
  return v;
}

void write_vec(std::ostream& os, const std::vector<float>& v) {
  Tensor t(Shape{1, 1, 1, static_cast<int>(v.size())});
  t.data = v;
  write_tensor(os, t);
}

std::vector<float> read_vec(std::istream& is) {
  return read_tensor(is).data;
}

constexpr char kNetMagic[4] = {'O', 'F', 'N', 'W'};
constexpr std::uint8_t kNetVersion = 1;

// Design targets quoted by describe(); the filter count is the one that can
// actually be met with 5x5xC_in kernels.
constexpr int kPlainNetFilterTarget = 906;
constexpr int kPlainNetParamTarget = 22000;

}  // namespace

template <typename T>
NetworkT<T> build_network(std::string name, int in_channels, std::vector<LayerSpec> specs,
                          std::uint64_t seed) {
  if (in_channels <= 0) throw ShapeError("build_network: in_channels must be positive");
  const auto widths = trace_channels(specs, in_channels);

  NetworkT<T> net;
  net.name = std::move(name);
  net.in_channels = in_channels;
  net.layers = std::move(specs);
  net.params.resize(net.layers.size());

  std::mt19937_64 rng(seed);
  int cur = in_channels;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& s = net.layers[i];
    if (s.kind == LayerKind::ConvBlock) {
      net.params[i].conv = make_conv_params<T>(cur, s.c_out, rng);
      net.params[i].bn = make_batchnorm_params<T>(s.c_out);
    } else if (s.kind == LayerKind::Predict) {
      net.params[i].conv = make_conv_params<T>(cur, s.c_out, rng);
    }
    cur = widths[i];
  }
  return net;
}

Network build_plainnet(std::uint64_t seed) {
  std::vector<LayerSpec> specs;
  for (int c : {64, 128, 256, 256, 128, 64}) specs.push_back({LayerKind::ConvBlock, c, -1});
  specs.push_back({LayerKind::Predict, 2, -1});
  return build_network<float>("plainnet", 8, std::move(specs), seed);
}

Network build_finalnet(std::uint64_t seed) {
  std::vector<LayerSpec> specs;
  std::vector<int> skip_layers;
  // Encoder: width doubles at every downsampling stage.
  for (int c : {32, 64, 128, 256}) {
    specs.push_back({LayerKind::ConvBlock, c, -1});
    skip_layers.push_back(static_cast<int>(specs.size()) - 1);
    specs.push_back({LayerKind::MaxPool, 0, -1});
  }
  specs.push_back({LayerKind::ConvBlock, 256, -1});  // bottleneck at 1/16

  // Decoder: upsample, concat the same-resolution encoder feature, then a
  // conv block shrinking the concatenated channels to a third.
  std::vector<int> widths = trace_channels(specs, 8);
  int cur = widths.back();
  for (int stage = 3; stage >= 0; --stage) {
    specs.push_back({LayerKind::BilinearUp, 0, -1});
    specs.push_back({LayerKind::Concat, 0, skip_layers[stage]});
    const int concat_c = cur + widths[skip_layers[stage]];
    const int shrunk = (concat_c + 2) / 3;
    specs.push_back({LayerKind::ConvBlock, shrunk, -1});
    cur = shrunk;
  }
  specs.push_back({LayerKind::Predict, 2, -1});
  return build_network<float>("finalnet", 8, std::move(specs), seed);
}

template <typename T>
TensorT<T> forward(NetworkT<T>& net, const TensorT<T>& input, Phase phase,
                   ForwardCacheT<T>* cache, const ForwardOptions* options) {
  if (net.layers.size() != net.params.size())
    throw StateError("forward: network params out of sync with layer list");
  if (input.shape.c != net.in_channels)
    throw ShapeError("forward: input has " + std::to_string(input.shape.c) +
                     " channels, network expects " + std::to_string(net.in_channels));

  if (cache) {
    cache->net_name = net.name;
    cache->layer_count = net.layers.size();
    cache->phase = phase;
    cache->layers.assign(net.layers.size(), {});
  }

  std::vector<std::shared_ptr<const TensorT<T>>> outputs(net.layers.size());
  auto cur = std::make_shared<const TensorT<T>>(input);

  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& spec = net.layers[i];
    const auto label = layer_label(static_cast<int>(i), spec.kind);
    std::shared_ptr<const TensorT<T>> out;
    LayerCacheT<T> lc;
    lc.input = cur;
    lc.input_shape = cur->shape;

    switch (spec.kind) {
      case LayerKind::ConvBlock: {
        auto conv_out =
            std::make_shared<const TensorT<T>>(conv_forward(*cur, *net.params[i].conv));
        auto bn_out = std::make_shared<const TensorT<T>>(
            batchnorm_forward(*conv_out, *net.params[i].bn, phase));
        out = std::make_shared<const TensorT<T>>(relu_forward(*bn_out));
        lc.conv_out = std::move(conv_out);
        lc.bn_out = std::move(bn_out);
        break;
      }
      case LayerKind::Predict:
        out = std::make_shared<const TensorT<T>>(conv_forward(*cur, *net.params[i].conv));
        break;
      case LayerKind::MaxPool: {
        if (cur->shape.h % 2 != 0 || cur->shape.w % 2 != 0)
          throw ShapeError(label + ": input " + to_string(cur->shape) +
                           " has odd spatial dims; pad inputs to a multiple of 16");
        auto r = maxpool_forward(*cur);
        out = std::make_shared<const TensorT<T>>(std::move(r.output));
        lc.argmax = std::move(r.argmax);
        break;
      }
      case LayerKind::BilinearUp:
        out = std::make_shared<const TensorT<T>>(bilinear_upsample_forward(*cur));
        break;
      case LayerKind::Concat: {
        const auto& skip = outputs[spec.skip_source];
        if (skip->shape.h != cur->shape.h || skip->shape.w != cur->shape.w)
          throw ShapeError(label + ": skip " + to_string(skip->shape) +
                           " does not match main path " + to_string(cur->shape));
        bool ablate = false;
        if (options)
          for (int z : options->zero_skip_layers) ablate = ablate || z == static_cast<int>(i);
        const TensorT<T> zero_skip = ablate ? TensorT<T>(skip->shape) : TensorT<T>();
        out = std::make_shared<const TensorT<T>>(
            concat_channels(*cur, ablate ? zero_skip : *skip));
        lc.concat_ca = cur->shape.c;
        break;
      }
    }

    lc.output_shape = out->shape;
    outputs[i] = out;
    if (cache) cache->layers[i] = std::move(lc);
    cur = out;
  }
  return *cur;
}

template <typename T>
std::vector<std::vector<T>> backward(const NetworkT<T>& net, const ForwardCacheT<T>& cache,
                                     const TensorT<T>& grad_flow) {
  if (cache.net_name != net.name || cache.layer_count != net.layers.size() ||
      cache.layers.size() != net.layers.size())
    throw StateError("backward: cache does not belong to this network");
  if (cache.phase != Phase::Train)
    throw StateError("backward: cache must come from a train-phase forward");
  detail::require_same_shape(grad_flow.shape, cache.layers.back().output_shape, "backward");

  const std::size_t n = net.layers.size();
  std::vector<TensorT<T>> grad_at(n);
  grad_at[n - 1] = grad_flow;

  struct LayerGrads {
    TensorT<T> weights;
    std::vector<T> bias, gamma, beta;
  };
  std::vector<LayerGrads> per_layer(n);

  for (std::size_t ri = n; ri-- > 0;) {
    const auto& spec = net.layers[ri];
    const auto& lc = cache.layers[ri];
    TensorT<T>& go = grad_at[ri];
    if (go.data.empty()) go = TensorT<T>(lc.output_shape);  // dead branch, zero grads

    TensorT<T> grad_input;
    switch (spec.kind) {
      case LayerKind::ConvBlock: {
        const auto relu_grad = relu_backward(*lc.bn_out, go);
        auto bn_grads = batchnorm_backward(*lc.conv_out, *net.params[ri].bn, relu_grad);
        auto conv_grads = conv_backward(*lc.input, *net.params[ri].conv, bn_grads.input);
        per_layer[ri].weights = std::move(conv_grads.weights);
        per_layer[ri].bias = std::move(conv_grads.bias);
        per_layer[ri].gamma = std::move(bn_grads.gamma);
        per_layer[ri].beta = std::move(bn_grads.beta);
        grad_input = std::move(conv_grads.input);
        break;
      }
      case LayerKind::Predict: {
        auto conv_grads = conv_backward(*lc.input, *net.params[ri].conv, go);
        per_layer[ri].weights = std::move(conv_grads.weights);
        per_layer[ri].bias = std::move(conv_grads.bias);
        grad_input = std::move(conv_grads.input);
        break;
      }
      case LayerKind::MaxPool:
        grad_input = maxpool_backward(lc.argmax, go, lc.input_shape);
        break;
      case LayerKind::BilinearUp:
        grad_input = bilinear_upsample_backward(go, lc.input_shape);
        break;
      case LayerKind::Concat: {
        auto [ga, gb] = concat_backward(go, lc.concat_ca);
        add_into(grad_at[spec.skip_source], gb);
        grad_input = std::move(ga);
        break;
      }
    }
    if (ri > 0) add_into(grad_at[ri - 1], grad_input);
  }

  std::vector<std::vector<T>> flat;
  for (std::size_t i = 0; i < n; ++i) {
    if (net.params[i].conv) {
      flat.push_back(std::move(per_layer[i].weights.data));
      flat.push_back(std::move(per_layer[i].bias));
    }
    if (net.params[i].bn) {
      flat.push_back(std::move(per_layer[i].gamma));
      flat.push_back(std::move(per_layer[i].beta));
    }
  }
  return flat;
}

template <typename T>
std::vector<std::vector<T>*> parameter_arrays(NetworkT<T>& net) {
  std::vector<std::vector<T>*> out;
  for (auto& lp : net.params) {
    if (lp.conv) {
      out.push_back(&lp.conv->weights.data);
      out.push_back(&lp.conv->bias);
    }
    if (lp.bn) {
      out.push_back(&lp.bn->gamma);
      out.push_back(&lp.bn->beta);
    }
  }
  return out;
}

template <typename T>
std::size_t parameter_count(const NetworkT<T>& net) {
  std::size_t count = 0;
  for (const auto& lp : net.params) {
    if (lp.conv) count += lp.conv->weights.data.size() + lp.conv->bias.size();
    if (lp.bn) count += lp.bn->gamma.size() + lp.bn->beta.size();
  }
  return count;
}

template <typename T>
int conv_filter_count(const NetworkT<T>& net) {
  int count = 0;
  for (const auto& lp : net.params)
    if (lp.conv) count += lp.conv->c_out();
  return count;
}

template <typename T>
std::string describe(const NetworkT<T>& net) {
  std::ostringstream os;
  os << net.name << ": " << net.layers.size() << " layers, input channels " << net.in_channels
     << "\n";
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& s = net.layers[i];
    os << "  [" << i << "] " << kind_name(s.kind);
    if (s.kind == LayerKind::ConvBlock || s.kind == LayerKind::Predict)
      os << " c_out=" << s.c_out;
    if (s.kind == LayerKind::Concat) os << " skip=" << s.skip_source;
    os << "\n";
  }
  const int filters = conv_filter_count(net);
  const std::size_t params = parameter_count(net);
  os << "conv filters (5x5): " << filters << "\n";
  os << "trainable parameters: " << params << "\n";
  if (net.name == "plainnet") {
    const double dev =
        100.0 * (filters - kPlainNetFilterTarget) / static_cast<double>(kPlainNetFilterTarget);
    os << "filter-count target " << kPlainNetFilterTarget << ": deviation "
       << (dev >= 0 ? "+" : "") << dev << "%\n";
    os << "note: the " << kPlainNetParamTarget
       << "-parameter target assumes depth-1 filters; with 5x5xC_in kernels the actual "
          "trainable count is "
       << params << ", so the filter count is the check that binds\n";
  }
  return os.str();
}

NetworkD widen(const Network& net) {
  NetworkD out;
  out.name = net.name;
  out.in_channels = net.in_channels;
  out.layers = net.layers;
  out.params.resize(net.params.size());
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    if (net.params[i].conv) {
      ConvParamsT<double> c;
      c.weights = widen(net.params[i].conv->weights);
      c.bias.assign(net.params[i].conv->bias.begin(), net.params[i].conv->bias.end());
      out.params[i].conv = std::move(c);
    }
    if (net.params[i].bn) {
      const auto& b = *net.params[i].bn;
      BatchNormParamsT<double> d;
      d.gamma.assign(b.gamma.begin(), b.gamma.end());
      d.beta.assign(b.beta.begin(), b.beta.end());
      d.running_mean.assign(b.running_mean.begin(), b.running_mean.end());
      d.running_var.assign(b.running_var.begin(), b.running_var.end());
      d.epsilon = b.epsilon;
      d.momentum = b.momentum;
      out.params[i].bn = std::move(d);
    }
  }
  return out;
}

void save_network(std::ostream& os, const Network& net) {
  os.write(kNetMagic, sizeof(kNetMagic));
  os.put(static_cast<char>(kNetVersion));
  write_u32(os, static_cast<std::uint32_t>(net.name.size()));
  os.write(net.name.data(), static_cast<std::streamsize>(net.name.size()));
  write_u32(os, static_cast<std::uint32_t>(net.in_channels));
  write_u32(os, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& s : net.layers) {
    os.put(static_cast<char>(s.kind));
    write_u32(os, static_cast<std::uint32_t>(s.c_out));
    write_u32(os, static_cast<std::uint32_t>(s.skip_source));
  }
  for (const auto& lp : net.params) {
    if (lp.conv) {
      write_tensor(os, lp.conv->weights);
      write_vec(os, lp.conv->bias);
    }
    if (lp.bn) {
      write_vec(os, lp.bn->gamma);
      write_vec(os, lp.bn->beta);
      write_vec(os, lp.bn->running_mean);
      write_vec(os, lp.bn->running_var);
      const float eps = lp.bn->epsilon, mom = lp.bn->momentum;
      os.write(reinterpret_cast<const char*>(&eps), sizeof(eps));
      os.write(reinterpret_cast<const char*>(&mom), sizeof(mom));
    }
  }
  if (!os) throw IoError("save_network: stream write failed");
}

Network load_network(std::istream& is) {
  char magic[4] = {};
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kNetMagic, sizeof(kNetMagic)) != 0)
    throw FormatError("load_network: bad magic");
  const int version = is.get();
  if (version != kNetVersion)
    throw FormatError("load_network: unsupported version " + std::to_string(version));

  Network net;
  const auto name_len = read_u32(is);
  if (name_len > 4096) throw FormatError("load_network: implausible name length");
  net.name.resize(name_len);
  is.read(net.name.data(), name_len);
  net.in_channels = static_cast<int>(read_u32(is));
  const auto n_layers = read_u32(is);
  if (n_layers > 100000) throw FormatError("load_network: implausible layer count");
  net.layers.resize(n_layers);
  for (auto& s : net.layers) {
    const int kind = is.get();
    if (kind < 0 || kind > static_cast<int>(LayerKind::Predict))
      throw FormatError("load_network: bad layer kind");
    s.kind = static_cast<LayerKind>(kind);
    s.c_out = static_cast<int>(read_u32(is));
    s.skip_source = static_cast<int>(read_u32(is));
  }
  if (!is) throw FormatError("load_network: truncated layer table");
  trace_channels(net.layers, net.in_channels);  // wiring sanity

  net.params.resize(n_layers);
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto kind = net.layers[i].kind;
    if (kind == LayerKind::ConvBlock || kind == LayerKind::Predict) {
      ConvParams c;
      c.weights = read_tensor(is);
      c.bias = read_vec(is);
      if (c.weights.shape.n != kConvKernel || c.weights.shape.h != kConvKernel ||
          c.weights.shape.c != net.layers[i].c_out ||
          static_cast<int>(c.bias.size()) != net.layers[i].c_out)
        throw FormatError("load_network: conv parameter shape mismatch at layer " +
                          std::to_string(i));
      net.params[i].conv = std::move(c);
    }
    if (kind == LayerKind::ConvBlock) {
      BatchNormParams b;
      b.gamma = read_vec(is);
      b.beta = read_vec(is);
      b.running_mean = read_vec(is);
      b.running_var = read_vec(is);
      is.read(reinterpret_cast<char*>(&b.epsilon), sizeof(b.epsilon));
      is.read(reinterpret_cast<char*>(&b.momentum), sizeof(b.momentum));
      if (!is) throw FormatError("load_network: truncated batchnorm block");
      if (b.gamma.size() != b.beta.size() || b.gamma.size() != b.running_mean.size() ||
          b.gamma.size() != b.running_var.size() ||
          static_cast<int>(b.gamma.size()) != net.layers[i].c_out)
        throw FormatError("load_network: batchnorm parameter shape mismatch at layer " +
                          std::to_string(i));
      net.params[i].bn = std::move(b);
    }
  }
  return net;
}

#define OFLOW_INSTANTIATE_GRAPH(T)                                                              \
  template NetworkT<T> build_network<T>(std::string, int, std::vector<LayerSpec>,               \
                                        std::uint64_t);                                         \
  template TensorT<T> forward<T>(NetworkT<T>&, const TensorT<T>&, Phase, ForwardCacheT<T>*,     \
                                 const ForwardOptions*);                                        \
  template std::vector<std::vector<T>> backward<T>(const NetworkT<T>&, const ForwardCacheT<T>&, \
                                                   const TensorT<T>&);                          \
  template std::vector<std::vector<T>*> parameter_arrays<T>(NetworkT<T>&);                      \
  template std::size_t parameter_count<T>(const NetworkT<T>&);                                  \
  template int conv_filter_count<T>(const NetworkT<T>&);                                        \
  template std::string describe<T>(const NetworkT<T>&);

OFLOW_INSTANTIATE_GRAPH(float)
OFLOW_INSTANTIATE_GRAPH(double)

#undef OFLOW_INSTANTIATE_GRAPH

}  // namespace oflow
