// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "auxadapt/error.hpp"
#include "auxadapt/ops.hpp"
#include "auxadapt/rng.hpp"
#include "auxadapt/tape.hpp"
#include "auxadapt/tensor.hpp"

namespace auxadapt {

enum class LayerKind : std::uint8_t { conv = 1, batchnorm = 2, relu = 3, avg_pool = 4, bilinear_up = 5 };

/// One entry of a layer list. Textual form: "conv(k,c_in,c_out)",
/// "batchnorm(c)", "relu", "avg_pool(f)", "bilinear_up(f)".
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t kernel = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t factor = 0;

  static LayerSpec conv(std::size_t k, std::size_t c_in, std::size_t c_out) {
    return {LayerKind::conv, k, c_in, c_out, 0};
  }
  static LayerSpec batchnorm(std::size_t c) { return {LayerKind::batchnorm, 0, c, c, 0}; }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0, 0}; }
  static LayerSpec avg_pool(std::size_t f) { return {LayerKind::avg_pool, 0, 0, 0, f}; }
  static LayerSpec bilinear_up(std::size_t f) { return {LayerKind::bilinear_up, 0, 0, 0, f}; }

  std::string to_string() const {
    switch (kind) {
      case LayerKind::conv:
        return "conv(" + std::to_string(kernel) + "," + std::to_string(in_channels) + "," +
               std::to_string(out_channels) + ")";
      case LayerKind::batchnorm: return "batchnorm(" + std::to_string(in_channels) + ")";
      case LayerKind::relu: return "relu";
      case LayerKind::avg_pool: return "avg_pool(" + std::to_string(factor) + ")";
      case LayerKind::bilinear_up: return "bilinear_up(" + std::to_string(factor) + ")";
    }
    return "?";
  }

  static LayerSpec parse(std::string_view text) {
    auto bad = [&](const char* why) -> LayerSpec {
      fail(Error::Kind::config, "layer spec '" + std::string(text) + "': " + why);
    };
    const auto open = text.find('(');
    const std::string_view name = text.substr(0, open);
    std::vector<std::size_t> args;
    if (open != std::string_view::npos) {
      if (text.back() != ')') return bad("missing ')'");
      std::string_view body = text.substr(open + 1, text.size() - open - 2);
      while (!body.empty()) {
        const auto comma = body.find(',');
        std::string_view tok = body.substr(0, comma);
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || ptr != tok.data() + tok.size() || v == 0) return bad("arguments must be positive integers");
        args.push_back(v);
        if (comma == std::string_view::npos) break;
        body.remove_prefix(comma + 1);
      }
    }
    auto want = [&](std::size_t n) {
      if (args.size() != n) bad("wrong number of arguments");
    };
    if (name == "conv") {
      want(3);
      if (args[0] % 2 == 0) return bad("kernel size must be odd");
      return conv(args[0], args[1], args[2]);
    }
    if (name == "batchnorm" || name == "bn") {
      want(1);
      return batchnorm(args[0]);
    }
    if (name == "relu") {
      want(0);
      return relu();
    }
    if (name == "avg_pool") {
      want(1);
      return avg_pool(args[0]);
    }
    if (name == "bilinear_up") {
      want(1);
      return bilinear_up(args[0]);
    }
    return bad("unknown layer type");
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  std::string name;
  std::size_t input_channels = 3;
  std::size_t num_classes = 0;
  std::vector<LayerSpec> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Channel and scale chain check. Throws Error::Kind::shape naming the
/// first offending layer.
inline void validate_spec(const NetworkSpec& spec) {
  if (spec.num_classes < 2) fail(Error::Kind::shape, spec.name + ": at least two classes required");
  if (spec.layers.empty()) fail(Error::Kind::shape, spec.name + ": empty layer list");
  std::size_t channels = spec.input_channels;
  std::size_t down = 1, up = 1;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    auto where = [&] { return spec.name + " layer " + std::to_string(i) + " (" + l.to_string() + ")"; };
    switch (l.kind) {
      case LayerKind::conv:
        if (l.in_channels != channels)
          fail(Error::Kind::shape, where() + ": expects " + std::to_string(l.in_channels) + " input channels, previous layer produces " + std::to_string(channels));
        channels = l.out_channels;
        break;
      case LayerKind::batchnorm:
        if (l.in_channels != channels)
          fail(Error::Kind::shape, where() + ": expects " + std::to_string(l.in_channels) + " channels, got " + std::to_string(channels));
        break;
      case LayerKind::avg_pool: down *= l.factor; break;
      case LayerKind::bilinear_up: up *= l.factor; break;
      case LayerKind::relu: break;
    }
  }
  if (channels != spec.num_classes)
    fail(Error::Kind::shape, spec.name + ": final layer produces " + std::to_string(channels) + " channels, expected " + std::to_string(spec.num_classes) + " classes");
  if (down != up)
    fail(Error::Kind::shape, spec.name + ": total downsampling " + std::to_string(down) + " does not match total upsampling " + std::to_string(up));
}

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
  std::size_t layer = 0;

  /// Batch-norm running statistics are never trainable.
  bool is_running_stat() const {
    return name.ends_with(".running_mean") || name.ends_with(".running_var");
  }
};

/// Layer list plus named parameters. A parameter's frozen flag decides
/// whether it appears in gradient sets.
template <typename T>
class Network {
 public:
  Network() = default;

  Network(NetworkSpec spec, std::vector<Parameter<T>> params) : spec_(std::move(spec)), params_(std::move(params)) {
    validate_spec(spec_);
    index_.assign(spec_.layers.size(), {});
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      for (const auto& [suffix, shape] : expected_params(spec_.layers[i])) {
        const std::string name = param_name(i, suffix);
        auto it = std::find_if(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
        if (it == params_.end()) fail(Error::Kind::format, spec_.name + ": missing parameter " + name);
        if (it->value.shape() != shape)
          fail(Error::Kind::shape, spec_.name + ": parameter " + name + " has shape " + shape_string(it->value.shape()) + ", expected " + shape_string(shape));
        it->layer = i;
        if (it->is_running_stat()) it->trainable = false;
        index_[i].push_back(static_cast<std::size_t>(it - params_.begin()));
      }
    }
    std::size_t expected = 0;
    for (const auto& idx : index_) expected += idx.size();
    if (expected != params_.size()) fail(Error::Kind::format, spec_.name + ": unexpected extra parameters");
  }

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::size_t num_classes() const noexcept { return spec_.num_classes; }
  std::span<const Parameter<T>> parameters() const noexcept { return params_; }
  std::span<Parameter<T>> parameters() noexcept { return params_; }

  /// Parameters of layer i in declaration order.
  const std::vector<std::size_t>& layer_params(std::size_t i) const { return index_.at(i); }

  Parameter<T>* find(std::string_view name) {
    auto it = std::find_if(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
    return it == params_.end() ? nullptr : &*it;
  }
  const Parameter<T>* find(std::string_view name) const { return const_cast<Network*>(this)->find(name); }

  std::size_t parameter_count(bool trainable_only = false) const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (!trainable_only || p.trainable) n += p.value.size();
    return n;
  }

  /// Sets every parameter except running statistics.
  void set_trainable(bool trainable) {
    for (auto& p : params_) p.trainable = trainable && !p.is_running_stat();
  }

  /// Makes exactly the parameters of layers [first, end) trainable.
  void set_trainable_from(std::size_t first_layer) {
    for (auto& p : params_) p.trainable = p.layer >= first_layer && !p.is_running_stat();
  }

  /// Index of the first layer holding a trainable parameter.
  std::optional<std::size_t> first_trainable_layer() const {
    std::optional<std::size_t> first;
    for (const auto& p : params_)
      if (p.trainable && (!first || p.layer < *first)) first = p.layer;
    return first;
  }

  /// Product of the pooling factors applied before the first conv.
  std::size_t input_downsample_factor() const {
    std::size_t f = 1;
    for (const auto& l : spec_.layers) {
      if (l.kind == LayerKind::conv) break;
      if (l.kind == LayerKind::avg_pool) f *= l.factor;
    }
    return f;
  }

  template <typename U>
  Network<U> cast() const {
    std::vector<Parameter<U>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(Parameter<U>{p.name, p.value.template cast<U>(), p.trainable, p.layer});
    return Network<U>(spec_, std::move(out));
  }

  static std::string param_name(std::size_t layer, std::string_view suffix) {
    return "l" + std::to_string(layer) + "." + std::string(suffix);
  }

  static std::vector<std::pair<std::string, Shape>> expected_params(const LayerSpec& l) {
    switch (l.kind) {
      case LayerKind::conv:
        return {{"weight", Shape{l.out_channels, l.in_channels, l.kernel, l.kernel}}, {"bias", Shape{l.out_channels}}};
      case LayerKind::batchnorm:
        return {{"gamma", Shape{l.in_channels}},
                {"beta", Shape{l.in_channels}},
                {"running_mean", Shape{l.in_channels}},
                {"running_var", Shape{l.in_channels}}};
      default: return {};
    }
  }

 private:
  NetworkSpec spec_;
  std::vector<Parameter<T>> params_;
  std::vector<std::vector<std::size_t>> index_;
};

/// Seeded construction. Conv weights are He fan-in normal, biases zero;
/// batch norm starts as the identity (gamma 1, beta 0, mean 0, var 1).
template <typename T = float>
Network<T> build_network(const NetworkSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Rng rng(mix_seed(seed, 0x4E4554ull));
  std::vector<Parameter<T>> params;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    for (const auto& [suffix, shape] : Network<T>::expected_params(l)) {
      Tensor<T> value(shape);
      if (suffix == "weight") {
        const double stddev = std::sqrt(2.0 / static_cast<double>(l.kernel * l.kernel * l.in_channels));
        for (auto& v : value.data()) v = static_cast<T>(rng.normal() * stddev);
      } else if (suffix == "gamma" || suffix == "running_var") {
        value.fill(T{1});
      }
      params.push_back(Parameter<T>{Network<T>::param_name(i, suffix), std::move(value), true, i});
    }
  }
  return Network<T>(spec, std::move(params));
}

inline NetworkSpec default_mainnet_spec(std::size_t num_classes = 4) {
  return NetworkSpec{"mainnet-toy", 3, num_classes,
                     {LayerSpec::conv(3, 3, 16), LayerSpec::batchnorm(16), LayerSpec::relu(),
                      LayerSpec::conv(3, 16, 16), LayerSpec::batchnorm(16), LayerSpec::relu(),
                      LayerSpec::conv(3, 16, 16), LayerSpec::batchnorm(16), LayerSpec::relu(),
                      LayerSpec::conv(1, 16, num_classes)}};
}

inline NetworkSpec default_auxnet_spec(std::size_t num_classes = 4) {
  return NetworkSpec{"auxnet-toy", 3, num_classes,
                     {LayerSpec::avg_pool(2), LayerSpec::conv(3, 3, 8), LayerSpec::batchnorm(8), LayerSpec::relu(),
                      LayerSpec::conv(3, 8, 8), LayerSpec::batchnorm(8), LayerSpec::relu(),
                      LayerSpec::conv(1, 8, num_classes), LayerSpec::bilinear_up(2)}};
}

/// Records the network's layers [0, stop_layer) on `tape`, starting from
/// `input`.
template <typename T>
Var forward(Tape<T>& tape, const Network<T>& net, Var input, std::size_t stop_layer = static_cast<std::size_t>(-1)) {
  const auto& spec = net.spec();
  const auto& x0 = tape.value(input);
  if (x0.rank() != 4 || x0.dim(0) != 1)
    fail(Error::Kind::shape, spec.name + ": input must have shape (1,C,H,W), got " + shape_string(x0.shape()));
  if (x0.dim(1) != spec.input_channels)
    fail(Error::Kind::shape, spec.name + " layer 0 (" + spec.layers.front().to_string() + "): input has " +
                                 std::to_string(x0.dim(1)) + " channels, network expects " + std::to_string(spec.input_channels));
  Var x = input;
  auto params = net.parameters();
  auto bind = [&](std::size_t layer, std::size_t k) {
    const auto& p = params[net.layer_params(layer)[k]];
    return tape.parameter(p.name, p.value, p.trainable);
  };
  for (std::size_t i = 0; i < std::min(stop_layer, spec.layers.size()); ++i) {
    const LayerSpec& l = spec.layers[i];
    const Shape cur = tape.value(x).shape();
    auto where = [&] { return spec.name + " layer " + std::to_string(i) + " (" + l.to_string() + ")"; };
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur[1] != l.in_channels)
          fail(Error::Kind::shape, where() + ": got " + std::to_string(cur[1]) + " input channels");
        Var w = bind(i, 0), b = bind(i, 1);
        x = ops::conv2d(tape, x, w, b);
        break;
      }
      case LayerKind::batchnorm: {
        if (cur[1] != l.in_channels)
          fail(Error::Kind::shape, where() + ": got " + std::to_string(cur[1]) + " channels");
        Var g = bind(i, 0), b = bind(i, 1), m = bind(i, 2), v = bind(i, 3);
        x = ops::batch_norm(tape, x, g, b, m, v);
        break;
      }
      case LayerKind::relu: x = ops::relu(tape, x); break;
      case LayerKind::avg_pool:
        if (cur[2] % l.factor || cur[3] % l.factor)
          fail(Error::Kind::shape, where() + ": spatial size " + std::to_string(cur[2]) + "x" +
                                       std::to_string(cur[3]) + " not divisible by " + std::to_string(l.factor));
        x = ops::avg_pool(tape, x, l.factor);
        break;
      case LayerKind::bilinear_up: x = ops::resize(tape, x, cur[2] * l.factor, cur[3] * l.factor); break;
    }
  }
  return x;
}

template <typename T>
struct ForwardResult {
  Tape<T> tape;
  Var logits;
  Var input;

  const Tensor<T>& value() const { return tape.value(logits); }
};

/// Runs the network on a single image, recording every op for backward.
template <typename T>
ForwardResult<T> forward_graph(const Network<T>& net, const Tensor<T>& input) {
  ForwardResult<T> r;
  r.input = r.tape.constant(input);
  r.logits = forward(r.tape, net, r.input);
  return r;
}

/// Full-resolution logits for a full-resolution frame. The network applies
/// its own input pooling and output upsampling.
template <typename T>
ForwardResult<T> predict_logits(const Network<T>& net, const Tensor<T>& frame) {
  auto r = forward_graph(net, frame);
  const auto& out = r.value();
  if (out.dim(2) != frame.dim(2) || out.dim(3) != frame.dim(3))
    fail(Error::Kind::shape, net.spec().name + ": output " + shape_string(out.shape()) + " does not match input " + shape_string(frame.shape()));
  return r;
}

/// Logits only, no retained tape.
template <typename T>
Tensor<T> infer(const Network<T>& net, const Tensor<T>& frame) {
  return predict_logits(net, frame).value();
}

/// Low-resolution copy of `main`: the same layers and weights wrapped in
/// avg_pool(factor) ... bilinear_up(factor). All copied parameters are
/// trainable; `main` is not touched.
template <typename T>
Network<T> derive_ofm_auxnet(const Network<T>& main, std::size_t factor) {
  if (factor < 2) fail(Error::Kind::argument, "derive_ofm_auxnet: factor must be >= 2");
  NetworkSpec spec = main.spec();
  spec.name = main.spec().name + "-ofm" + std::to_string(factor);
  spec.layers.insert(spec.layers.begin(), LayerSpec::avg_pool(factor));
  spec.layers.push_back(LayerSpec::bilinear_up(factor));
  std::vector<Parameter<T>> params;
  for (const auto& p : main.parameters()) {
    const std::string suffix = p.name.substr(p.name.find('.') + 1);
    Parameter<T> q{Network<T>::param_name(p.layer + 1, suffix), p.value, true, p.layer + 1};
    q.trainable = !q.is_running_stat();
    params.push_back(std::move(q));
  }
  return Network<T>(std::move(spec), std::move(params));
}

/// Per-pixel argmax over classes; ties go to the lowest class index.
template <typename T>
SegMap argmax_decision(const Tensor<T>& logits) {
  require_single_image(logits, "argmax_decision");
  const std::size_t k = logits.dim(1), h = logits.dim(2), w = logits.dim(3), plane = h * w;
  SegMap seg(h, w, 1);
  for (std::size_t p = 0; p < plane; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (logits[c * plane + p] > logits[best * plane + p]) best = c;
    seg[p] = static_cast<int>(best + 1);
  }
  return seg;
}

template <typename T>
Tensor<T> add_logits(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail(Error::Kind::shape, "fuse: logit shapes differ " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

/// Hard decision of the fused model: argmax of main + aux.
template <typename T>
SegMap fuse_and_decide(const Tensor<T>& main_logits, const Tensor<T>& aux_logits) {
  return argmax_decision(add_logits(main_logits, aux_logits));
}

struct MacCount {
  std::uint64_t forward = 0;
  std::uint64_t backward = 0;
  std::vector<std::uint64_t> per_layer;

  /// Backward cost of propagating from the output back to `first_layer`.
  std::uint64_t backward_from(std::size_t first_layer) const {
    std::uint64_t s = 0;
    for (std::size_t i = first_layer; i < per_layer.size(); ++i) s += per_layer[i];
    return 2 * s;
  }
};

/// Conv: k*k*c_in*c_out*H*W. Pool, resize and batch norm: one per output
/// element. ReLU is free. Backward is twice forward.
inline MacCount count_macs(const NetworkSpec& spec, std::size_t height, std::size_t width) {
  MacCount m;
  std::size_t h = height, w = width, c = spec.input_channels;
  for (const auto& l : spec.layers) {
    std::uint64_t macs = 0;
    switch (l.kind) {
      case LayerKind::conv:
        macs = static_cast<std::uint64_t>(l.kernel) * l.kernel * l.in_channels * l.out_channels * h * w;
        c = l.out_channels;
        break;
      case LayerKind::batchnorm: macs = static_cast<std::uint64_t>(c) * h * w; break;
      case LayerKind::relu: break;
      case LayerKind::avg_pool:
        h /= l.factor;
        w /= l.factor;
        macs = static_cast<std::uint64_t>(c) * h * w;
        break;
      case LayerKind::bilinear_up:
        h *= l.factor;
        w *= l.factor;
        macs = static_cast<std::uint64_t>(c) * h * w;
        break;
    }
    m.per_layer.push_back(macs);
    m.forward += macs;
  }
  m.backward = 2 * m.forward;
  return m;
}

template <typename T>
MacCount count_macs(const Network<T>& net, std::size_t height, std::size_t width) {
  return count_macs(net.spec(), height, width);
}

/// FNV-1a over parameter names and raw value bytes.
template <typename T>
std::uint64_t checksum(const Network<T>& net) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto eat = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 0x100000001B3ull;
  };
  for (const auto& p : net.parameters()) {
    eat(p.name.data(), p.name.size());
    eat(p.value.data().data(), p.value.size() * sizeof(T));
  }
  return h;
}

}  // namespace auxadapt
