#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tactnet/io.hpp"
#include "tactnet/layers.hpp"
#include "tactnet/rng.hpp"
#include "tactnet/tensor.hpp"

namespace tactnet {

inline constexpr float kBatchNormEpsilon = 1e-4f;
inline constexpr float kBatchNormMomentum = 0.9f;

enum class LayerKind : std::uint8_t {
  kConv = 0,
  kBatchNorm = 1,
  kReLU = 2,
  kMaxPool = 3,
  kFullyConnected = 4,
  kResidual = 5,
};

struct LayerSpec {
  LayerKind kind = LayerKind::kReLU;
  Index filter = 0;       // conv
  Index in_ch = 0;        // conv / batchnorm / residual
  Index out_ch = 0;       // conv / residual
  Index stride = 1;       // conv / residual
  Padding pad = Padding::kSame;
  Index fc_in = 0;        // fully connected
  Index fc_out = 0;
  bool projection = false;  // residual skip needs a 1x1 projection

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// One optimizer-visible parameter tensor with its gradient and velocity.
template <typename S>
struct Param {
  Tensor<S> value, grad, velocity;
  bool present() const { return value.size() > 0; }
};

template <typename S>
struct LayerParams {
  Param<S> weights, bias;          // conv / fc
  Param<S> gamma, beta;            // batchnorm
  Tensor<S> running_mean, running_var;
};

template <typename S>
struct Layer {
  LayerSpec spec;
  LayerParams<S> params;
  std::vector<Layer<S>> sub;  // residual internals: conv_a, bn_a, conv_b, bn_b [, proj, bn_p]
};

enum class Variant { kTactNet4, kTactNet6, kTactResNet };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kTactNet4: return "tactnet4";
    case Variant::kTactNet6: return "tactnet6";
    case Variant::kTactResNet: return "tactresnet";
  }
  throw std::invalid_argument("variant_name: unknown variant");
}

inline Variant variant_from_name(const std::string& name) {
  if (name == "tactnet4") return Variant::kTactNet4;
  if (name == "tactnet6") return Variant::kTactNet6;
  if (name == "tactresnet") return Variant::kTactResNet;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected tactnet4, tactnet6 or tactresnet)");
}

template <typename S>
struct ModelGraph {
  std::string variant;
  Index input_rows = 0, input_cols = 0, input_channels = 1;
  Index n_classes = 22;
  std::vector<Layer<S>> layers;
};

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

namespace detail {

inline LayerSpec conv_spec(Index filter, Index in_ch, Index out_ch, Index stride = 1) {
  LayerSpec s;
  s.kind = LayerKind::kConv;
  s.filter = filter;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.stride = stride;
  return s;
}

inline LayerSpec bn_spec(Index channels) {
  LayerSpec s;
  s.kind = LayerKind::kBatchNorm;
  s.in_ch = channels;
  return s;
}

inline LayerSpec relu_spec() { return LayerSpec{}; }

inline LayerSpec pool_spec() {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool;
  return s;
}

inline LayerSpec fc_spec(Index in_dim, Index out_dim) {
  LayerSpec s;
  s.kind = LayerKind::kFullyConnected;
  s.fc_in = in_dim;
  s.fc_out = out_dim;
  return s;
}

inline LayerSpec residual_spec(Index in_ch, Index out_ch, Index stride) {
  LayerSpec s;
  s.kind = LayerKind::kResidual;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.stride = stride;
  s.projection = (in_ch != out_ch) || (stride != 1);
  return s;
}

template <typename S>
Layer<S> make_layer(const LayerSpec& spec) {
  Layer<S> layer;
  layer.spec = spec;
  switch (spec.kind) {
    case LayerKind::kConv:
      layer.params.weights.value = Tensor<S>({spec.filter, spec.filter, spec.in_ch, spec.out_ch});
      layer.params.bias.value = Tensor<S>({spec.out_ch});
      break;
    case LayerKind::kBatchNorm:
      layer.params.gamma.value = Tensor<S>::constant({spec.in_ch}, S(1));
      layer.params.beta.value = Tensor<S>({spec.in_ch});
      layer.params.running_mean = Tensor<S>({spec.in_ch});
      layer.params.running_var = Tensor<S>::constant({spec.in_ch}, S(1));
      break;
    case LayerKind::kFullyConnected:
      layer.params.weights.value = Tensor<S>({spec.fc_in, spec.fc_out});
      layer.params.bias.value = Tensor<S>({spec.fc_out});
      break;
    case LayerKind::kResidual: {
      layer.sub.push_back(make_layer<S>(conv_spec(3, spec.in_ch, spec.out_ch, spec.stride)));
      layer.sub.push_back(make_layer<S>(bn_spec(spec.out_ch)));
      layer.sub.push_back(make_layer<S>(conv_spec(3, spec.out_ch, spec.out_ch, 1)));
      layer.sub.push_back(make_layer<S>(bn_spec(spec.out_ch)));
      if (spec.projection) {
        layer.sub.push_back(make_layer<S>(conv_spec(1, spec.in_ch, spec.out_ch, spec.stride)));
        layer.sub.push_back(make_layer<S>(bn_spec(spec.out_ch)));
      }
      break;
    }
    default:
      break;
  }
  return layer;
}

inline Index pooled(Index extent) { return ceil_div(extent, 2); }

}  // namespace detail

// ---------------------------------------------------------------------------
// parameter traversal (declaration order; stable across save/load)
// ---------------------------------------------------------------------------

template <typename S>
struct ParamRef {
  std::string name;
  Param<S>* param;
};

template <typename S>
void collect_params(Layer<S>& layer, const std::string& prefix, std::vector<ParamRef<S>>& out) {
  auto add = [&](const char* tag, Param<S>& p) {
    if (p.present()) out.push_back({prefix + "." + tag, &p});
  };
  add("weights", layer.params.weights);
  add("bias", layer.params.bias);
  add("gamma", layer.params.gamma);
  add("beta", layer.params.beta);
  for (std::size_t i = 0; i < layer.sub.size(); ++i)
    collect_params(layer.sub[i], prefix + "." + std::to_string(i), out);
}

template <typename S>
std::vector<ParamRef<S>> parameters(ModelGraph<S>& graph) {
  std::vector<ParamRef<S>> out;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    std::string name = "layer" + std::to_string(i);
    switch (graph.layers[i].spec.kind) {
      case LayerKind::kConv: name += ".conv"; break;
      case LayerKind::kBatchNorm: name += ".bn"; break;
      case LayerKind::kFullyConnected: name += ".fc"; break;
      case LayerKind::kResidual: name += ".res"; break;
      default: break;
    }
    collect_params(graph.layers[i], name, out);
  }
  return out;
}

// weights, biases and batch-norm affine parameters; running stats excluded
template <typename S>
std::int64_t parameter_count(const ModelGraph<S>& graph) {
  std::int64_t total = 0;
  std::function<void(const Layer<S>&)> walk = [&](const Layer<S>& layer) {
    for (const Param<S>* p :
         {&layer.params.weights, &layer.params.bias, &layer.params.gamma, &layer.params.beta})
      total += p->value.size();
    for (const Layer<S>& s : layer.sub) walk(s);
  };
  for (const Layer<S>& layer : graph.layers) walk(layer);
  return total;
}

// He-normal conv/fc weights, zero bias, unit gamma, zero beta
template <typename S>
void initialize_params(ModelGraph<S>& graph, std::uint64_t seed) {
  Rng rng(seed);
  std::function<void(Layer<S>&)> walk = [&](Layer<S>& layer) {
    if (layer.spec.kind == LayerKind::kConv || layer.spec.kind == LayerKind::kFullyConnected) {
      Tensor<S>& w = layer.params.weights.value;
      const Index fan_in = layer.spec.kind == LayerKind::kConv
                               ? layer.spec.filter * layer.spec.filter * layer.spec.in_ch
                               : layer.spec.fc_in;
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<S>(rng.normal(0.0, stddev));
      layer.params.bias.value.array() = S(0);
    } else if (layer.spec.kind == LayerKind::kBatchNorm) {
      layer.params.gamma.value.array() = S(1);
      layer.params.beta.value.array() = S(0);
      layer.params.running_mean.array() = S(0);
      layer.params.running_var.array() = S(1);
    }
    for (Layer<S>& s : layer.sub) walk(s);
  };
  for (Layer<S>& layer : graph.layers) walk(layer);
}

// ---------------------------------------------------------------------------
// build_tactnet: conv -> bn -> relu -> pool stages, single fc head.
// ---------------------------------------------------------------------------

template <typename S = float>
ModelGraph<S> build_tactnet(Variant variant, Index input_rows, Index input_cols,
                            Index n_classes = 22, std::uint64_t init_seed = 0) {
  require(input_rows >= 7 && input_cols >= 7,
          "build_tactnet: input must be at least 7x7 for the pooling ladder, got " +
              std::to_string(input_rows) + "x" + std::to_string(input_cols));
  require(n_classes >= 2, "build_tactnet: need at least two classes");

  ModelGraph<S> g;
  g.variant = variant_name(variant);
  g.input_rows = input_rows;
  g.input_cols = input_cols;
  g.input_channels = 1;
  g.n_classes = n_classes;

  using namespace detail;
  Index h = input_rows, w = input_cols, ch = 1;
  std::vector<LayerSpec> specs;

  auto conv_stage = [&](Index filter, Index out_ch) {
    specs.push_back(conv_spec(filter, ch, out_ch));
    specs.push_back(bn_spec(out_ch));
    specs.push_back(relu_spec());
    specs.push_back(pool_spec());
    ch = out_ch;
    h = pooled(h);
    w = pooled(w);
  };

  switch (variant) {
    case Variant::kTactNet4:
      conv_stage(5, 8);
      conv_stage(3, 16);
      conv_stage(3, 32);
      break;
    case Variant::kTactNet6:
      conv_stage(5, 8);
      conv_stage(5, 16);
      conv_stage(3, 32);
      conv_stage(3, 64);
      conv_stage(3, 128);
      break;
    case Variant::kTactResNet: {
      specs.push_back(conv_spec(3, 1, 16));
      specs.push_back(bn_spec(16));
      specs.push_back(relu_spec());
      ch = 16;
      const std::array<std::pair<Index, Index>, 4> plan = {
          {{32, 2}, {64, 2}, {128, 2}, {128, 1}}};
      for (const auto& [out_ch, stride] : plan) {
        specs.push_back(residual_spec(ch, out_ch, stride));
        ch = out_ch;
        if (stride == 2) {
          h = ceil_div(h, 2);
          w = ceil_div(w, 2);
        }
      }
      break;
    }
  }
  specs.push_back(fc_spec(h * w * ch, n_classes));

  g.layers.reserve(specs.size());
  for (const LayerSpec& s : specs) g.layers.push_back(detail::make_layer<S>(s));
  initialize_params(g, init_seed);
  return g;
}

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

template <typename S>
struct LayerCache {
  Conv2dCache<S> conv;
  BatchNormCache<S> bn;
  Tensor<S> relu_input;
  MaxPoolCache<S> pool;
  FcCache<S> fc;
  std::vector<LayerCache<S>> sub;  // residual internals
  Tensor<S> residual_preact;       // main + skip before the final relu
};

template <typename S>
struct ForwardCache {
  std::vector<LayerCache<S>> layers;
};

namespace detail {

template <typename S>
Tensor<S> layer_forward(Layer<S>& layer, const Tensor<S>& x, Mode mode, LayerCache<S>* cache) {
  switch (layer.spec.kind) {
    case LayerKind::kConv:
      return conv2d(x, layer.params.weights.value, layer.params.bias.value, layer.spec.stride,
                    layer.spec.pad, cache ? &cache->conv : nullptr);
    case LayerKind::kBatchNorm:
      return batchnorm(x, layer.params.gamma.value, layer.params.beta.value,
                       layer.params.running_mean, layer.params.running_var, mode,
                       static_cast<S>(kBatchNormEpsilon), static_cast<S>(kBatchNormMomentum),
                       cache ? &cache->bn : nullptr);
    case LayerKind::kReLU:
      return relu(x, cache ? &cache->relu_input : nullptr);
    case LayerKind::kMaxPool:
      return maxpool2d(x, Index(2), Index(2), cache ? &cache->pool : nullptr);
    case LayerKind::kFullyConnected:
      return fully_connected(x, layer.params.weights.value, layer.params.bias.value,
                             cache ? &cache->fc : nullptr);
    case LayerKind::kResidual: {
      if (cache) cache->sub.resize(layer.sub.size() + 1);  // +1: relu after conv_a/bn_a
      auto sc = [&](std::size_t i) { return cache ? &cache->sub[i] : nullptr; };
      Tensor<S> main = layer_forward(layer.sub[0], x, mode, sc(0));
      main = layer_forward(layer.sub[1], main, mode, sc(1));
      main = relu(main, cache ? &cache->sub[layer.sub.size()].relu_input : nullptr);
      main = layer_forward(layer.sub[2], main, mode, sc(2));
      main = layer_forward(layer.sub[3], main, mode, sc(3));
      Tensor<S> skip = x;
      if (layer.spec.projection) {
        skip = layer_forward(layer.sub[4], x, mode, sc(4));
        skip = layer_forward(layer.sub[5], skip, mode, sc(5));
      }
      require(main.same_shape(skip), "residual: main and skip path shapes differ (" +
                                         shape_string(main.shape()) + " vs " +
                                         shape_string(skip.shape()) + ")");
      main.array() += skip.array();
      if (cache) cache->residual_preact = main;
      Tensor<S> y(main.shape());
      y.array() = main.array().max(S(0));
      return y;
    }
  }
  throw std::logic_error("layer_forward: unknown layer kind");
}

template <typename S>
Tensor<S> layer_backward(Layer<S>& layer, const Tensor<S>& dy, LayerCache<S>& cache) {
  auto accumulate = [](Param<S>& p, Tensor<S>&& g) {
    if (p.grad.size() == 0)
      p.grad = std::move(g);
    else
      p.grad.array() += g.array();
  };
  switch (layer.spec.kind) {
    case LayerKind::kConv: {
      Conv2dGrads<S> g = conv2d_backward(dy, cache.conv);
      accumulate(layer.params.weights, std::move(g.dw));
      accumulate(layer.params.bias, std::move(g.db));
      return std::move(g.dx);
    }
    case LayerKind::kBatchNorm: {
      BatchNormGrads<S> g = batchnorm_backward(dy, cache.bn);
      accumulate(layer.params.gamma, std::move(g.dgamma));
      accumulate(layer.params.beta, std::move(g.dbeta));
      return std::move(g.dx);
    }
    case LayerKind::kReLU:
      return relu_backward(dy, cache.relu_input);
    case LayerKind::kMaxPool:
      return maxpool2d_backward(dy, cache.pool);
    case LayerKind::kFullyConnected: {
      FcGrads<S> g = fully_connected_backward(dy, cache.fc);
      accumulate(layer.params.weights, std::move(g.dw));
      accumulate(layer.params.bias, std::move(g.db));
      return std::move(g.dx);
    }
    case LayerKind::kResidual: {
      Tensor<S> d_pre = relu_backward(dy, cache.residual_preact);
      // main branch
      Tensor<S> d = layer_backward(layer.sub[3], d_pre, cache.sub[3]);
      d = layer_backward(layer.sub[2], d, cache.sub[2]);
      d = relu_backward(d, cache.sub[layer.sub.size()].relu_input);
      d = layer_backward(layer.sub[1], d, cache.sub[1]);
      Tensor<S> dx = layer_backward(layer.sub[0], d, cache.sub[0]);
      // skip branch
      if (layer.spec.projection) {
        Tensor<S> ds = layer_backward(layer.sub[5], d_pre, cache.sub[5]);
        ds = layer_backward(layer.sub[4], ds, cache.sub[4]);
        dx.array() += ds.array();
      } else {
        dx.array() += d_pre.array();
      }
      return dx;
    }
  }
  throw std::logic_error("layer_backward: unknown layer kind");
}

}  // namespace detail

template <typename S>
Tensor<S> forward(ModelGraph<S>& graph, const Tensor<S>& batch, Mode mode,
                  ForwardCache<S>* cache = nullptr) {
  require(batch.rank() == 4, "forward: batch must be [N,H,W,C]");
  require(batch.dim(1) == graph.input_rows && batch.dim(2) == graph.input_cols &&
              batch.dim(3) == graph.input_channels,
          "forward: batch shape " + shape_string(batch.shape()) + " does not match model input " +
              std::to_string(graph.input_rows) + "x" + std::to_string(graph.input_cols) + "x" +
              std::to_string(graph.input_channels));
  if (cache) cache->layers.resize(graph.layers.size());
  Tensor<S> x = batch;
  for (std::size_t i = 0; i < graph.layers.size(); ++i)
    x = detail::layer_forward(graph.layers[i], x, mode, cache ? &cache->layers[i] : nullptr);
  return x;
}

// Accumulates parameter gradients and returns the input gradient.
template <typename S>
Tensor<S> backward(ModelGraph<S>& graph, const Tensor<S>& dlogits, ForwardCache<S>& cache) {
  require(cache.layers.size() == graph.layers.size(), "backward: cache does not match graph");
  Tensor<S> d = dlogits;
  for (std::size_t i = graph.layers.size(); i-- > 0;)
    d = detail::layer_backward(graph.layers[i], d, cache.layers[i]);
  return d;
}

template <typename S>
void zero_grads(ModelGraph<S>& graph) {
  for (ParamRef<S>& ref : parameters(graph))
    if (ref.param->grad.size()) ref.param->grad.array() = S(0);
}

// Flattened activations immediately before the fc head.  `cut` is the number
// of leading layers to run; it defaults to everything but the head.
template <typename S>
Tensor<S> extract_features(ModelGraph<S>& graph, const Tensor<S>& batch, Index cut = -1) {
  const Index head = static_cast<Index>(graph.layers.size()) - 1;
  require(head >= 0 && graph.layers[static_cast<std::size_t>(head)].spec.kind ==
                           LayerKind::kFullyConnected,
          "extract_features: graph has no fc head");
  if (cut < 0) cut = head;
  require(cut <= head, "extract_features: cut index " + std::to_string(cut) +
                           " is beyond the head at " + std::to_string(head));
  Tensor<S> x = batch;
  for (Index i = 0; i < cut; ++i)
    x = detail::layer_forward(graph.layers[static_cast<std::size_t>(i)], x, Mode::kInfer,
                              static_cast<LayerCache<S>*>(nullptr));
  const Index n = x.dim(0);
  x.reshape({n, x.size() / n});
  return x;
}

template <typename S>
Index feature_dimension(const ModelGraph<S>& graph) {
  const Layer<S>& head = graph.layers.back();
  require(head.spec.kind == LayerKind::kFullyConnected, "feature_dimension: graph has no fc head");
  return head.spec.fc_in;
}

// ---------------------------------------------------------------------------
// checkpoint container: magic "TNET", version, layer specs, then parameter
// tensors in declaration order as little-endian f32 (running stats included
// after the optimizer-visible tensors of each layer).
// ---------------------------------------------------------------------------

namespace detail {

// f32 little-endian payload; this build targets little-endian hosts
template <typename S>
void put_tensor(std::ostream& os, const Tensor<S>& t) {
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (Index i = 0; i < t.rank(); ++i) put_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  for (Index i = 0; i < t.size(); ++i) put_f32(os, static_cast<float>(t[i]));
}

template <typename S>
Tensor<S> get_tensor(std::istream& is) {
  const std::uint32_t rank = get_u32(is);
  if (rank > 8) throw std::runtime_error("checkpoint: implausible tensor rank");
  std::vector<Index> shape(rank);
  for (auto& d : shape) d = static_cast<Index>(get_u32(is));
  Tensor<S> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(get_f32(is));
  return t;
}

inline void put_spec(std::ostream& os, const LayerSpec& s) {
  os.put(static_cast<char>(s.kind));
  put_u32(os, static_cast<std::uint32_t>(s.filter));
  put_u32(os, static_cast<std::uint32_t>(s.in_ch));
  put_u32(os, static_cast<std::uint32_t>(s.out_ch));
  put_u32(os, static_cast<std::uint32_t>(s.stride));
  os.put(s.pad == Padding::kSame ? 0 : 1);
  put_u32(os, static_cast<std::uint32_t>(s.fc_in));
  put_u32(os, static_cast<std::uint32_t>(s.fc_out));
  os.put(s.projection ? 1 : 0);
}

inline LayerSpec get_spec(std::istream& is) {
  LayerSpec s;
  const int kind = is.get();
  if (kind < 0 || kind > 5) throw std::runtime_error("checkpoint: bad layer kind");
  s.kind = static_cast<LayerKind>(kind);
  s.filter = static_cast<Index>(get_u32(is));
  s.in_ch = static_cast<Index>(get_u32(is));
  s.out_ch = static_cast<Index>(get_u32(is));
  s.stride = static_cast<Index>(get_u32(is));
  s.pad = is.get() == 0 ? Padding::kSame : Padding::kValid;
  s.fc_in = static_cast<Index>(get_u32(is));
  s.fc_out = static_cast<Index>(get_u32(is));
  s.projection = is.get() != 0;
  if (!is) throw std::runtime_error("checkpoint: truncated layer spec");
  return s;
}

template <typename S>
void put_layer_values(std::ostream& os, const Layer<S>& layer) {
  for (const Param<S>* p :
       {&layer.params.weights, &layer.params.bias, &layer.params.gamma, &layer.params.beta})
    if (p->present()) put_tensor(os, p->value);
  if (layer.params.running_mean.size()) {
    put_tensor(os, layer.params.running_mean);
    put_tensor(os, layer.params.running_var);
  }
  for (const Layer<S>& s : layer.sub) put_layer_values(os, s);
}

template <typename S>
void get_layer_values(std::istream& is, Layer<S>& layer) {
  for (Param<S>* p :
       {&layer.params.weights, &layer.params.bias, &layer.params.gamma, &layer.params.beta})
    if (p->present()) {
      Tensor<S> t = get_tensor<S>(is);
      require(t.shape() == p->value.shape(), "checkpoint: parameter shape mismatch");
      p->value = std::move(t);
    }
  if (layer.params.running_mean.size()) {
    layer.params.running_mean = get_tensor<S>(is);
    layer.params.running_var = get_tensor<S>(is);
    require((layer.params.running_var.array() >= S(0)).all(),
            "checkpoint: negative running variance");
  }
  for (Layer<S>& s : layer.sub) get_layer_values(is, s);
}

}  // namespace detail

inline constexpr char kModelMagic[4] = {'T', 'N', 'E', 'T'};
inline constexpr std::uint16_t kModelVersion = 1;

template <typename S>
void save_model(const ModelGraph<S>& graph, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_model: cannot open '" + path + "' for writing");
  os.write(kModelMagic, 4);
  detail::put_u16(os, kModelVersion);
  detail::put_string(os, graph.variant);
  detail::put_u32(os, static_cast<std::uint32_t>(graph.input_rows));
  detail::put_u32(os, static_cast<std::uint32_t>(graph.input_cols));
  detail::put_u32(os, static_cast<std::uint32_t>(graph.input_channels));
  detail::put_u32(os, static_cast<std::uint32_t>(graph.n_classes));
  detail::put_u32(os, static_cast<std::uint32_t>(graph.layers.size()));
  for (const Layer<S>& layer : graph.layers) detail::put_spec(os, layer.spec);
  for (const Layer<S>& layer : graph.layers) detail::put_layer_values(os, layer);
  if (!os) throw std::runtime_error("save_model: write failed for '" + path + "'");
}

template <typename S = float>
ModelGraph<S> load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_model: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kModelMagic, 4) != 0)
    throw std::runtime_error("load_model: '" + path + "' is not a TNET checkpoint");
  const std::uint16_t version = detail::get_u16(is);
  if (version != kModelVersion)
    throw std::runtime_error("load_model: unsupported checkpoint version " +
                             std::to_string(version));
  ModelGraph<S> g;
  g.variant = detail::get_string(is);
  g.input_rows = static_cast<Index>(detail::get_u32(is));
  g.input_cols = static_cast<Index>(detail::get_u32(is));
  g.input_channels = static_cast<Index>(detail::get_u32(is));
  g.n_classes = static_cast<Index>(detail::get_u32(is));
  const std::uint32_t n_layers = detail::get_u32(is);
  if (n_layers > 1024) throw std::runtime_error("load_model: implausible layer count");
  std::vector<LayerSpec> specs(n_layers);
  for (auto& s : specs) s = detail::get_spec(is);
  g.layers.reserve(n_layers);
  for (const LayerSpec& s : specs) g.layers.push_back(detail::make_layer<S>(s));
  for (Layer<S>& layer : g.layers) detail::get_layer_values(is, layer);
  is.peek();
  if (!is.eof()) throw std::runtime_error("load_model: trailing bytes in '" + path + "'");
  return g;
}

template <typename S>
void collect_running_stats(Layer<S>& layer, std::vector<Tensor<S>*>& out) {
  if (layer.params.running_mean.size()) {
    out.push_back(&layer.params.running_mean);
    out.push_back(&layer.params.running_var);
  }
  for (Layer<S>& s : layer.sub) collect_running_stats(s, out);
}

template <typename S>
std::vector<Tensor<S>*> running_stats(ModelGraph<S>& graph) {
  std::vector<Tensor<S>*> out;
  for (Layer<S>& layer : graph.layers) collect_running_stats(layer, out);
  return out;
}

// Copy of all parameter values plus batch-norm running stats (for
// best-epoch snapshots).
template <typename S>
std::vector<Tensor<S>> snapshot_params(ModelGraph<S>& graph) {
  std::vector<Tensor<S>> out;
  for (ParamRef<S>& ref : parameters(graph)) out.push_back(ref.param->value);
  for (Tensor<S>* t : running_stats(graph)) out.push_back(*t);
  return out;
}

template <typename S>
void restore_params(ModelGraph<S>& graph, const std::vector<Tensor<S>>& snapshot) {
  auto refs = parameters(graph);
  auto stats = running_stats(graph);
  require(refs.size() + stats.size() == snapshot.size(), "restore_params: snapshot size mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) refs[i].param->value = snapshot[i];
  for (std::size_t i = 0; i < stats.size(); ++i) *stats[i] = snapshot[refs.size() + i];
}

}  // namespace tactnet
