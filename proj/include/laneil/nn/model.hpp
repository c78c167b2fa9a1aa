#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "laneil/core/rng.hpp"
#include "laneil/nn/layers.hpp"

namespace laneil::nn {

struct LayerSpec {
  enum class Kind { IC, Conv, ReLU, Flatten, FC };

  Kind kind = Kind::ReLU;
  double p = 0.0;         // IC dropout probability
  bool spatial = false;   // IC: spatial (per channel) or element dropout
  std::size_t units = 0;  // Conv filters or FC outputs
  std::size_t kernel = 0;
  std::size_t stride = 1;

  static LayerSpec ic(double p, bool spatial) { return {Kind::IC, p, spatial}; }
  static LayerSpec conv(std::size_t filters, std::size_t kernel, std::size_t stride) {
    return {Kind::Conv, 0.0, false, filters, kernel, stride};
  }
  static LayerSpec relu() { return {Kind::ReLU}; }
  static LayerSpec flatten() { return {Kind::Flatten}; }
  static LayerSpec fc(std::size_t units) { return {Kind::FC, 0.0, false, units}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

inline const char* kind_name(LayerSpec::Kind k) {
  switch (k) {
    case LayerSpec::Kind::IC: return "ic";
    case LayerSpec::Kind::Conv: return "conv";
    case LayerSpec::Kind::ReLU: return "relu";
    case LayerSpec::Kind::Flatten: return "flatten";
    case LayerSpec::Kind::FC: return "fc";
  }
  return "?";
}

struct ModelConfig {
  Shape input{3, 32, 64};  // C, H, W of one sample
  std::vector<LayerSpec> layers;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Five IC-conv-ReLU stages tapering to a 2 x 4 map of 64 channels, then an
// IC-FC-ReLU stage and a linear two-unit head. Convolutions use padding k/2.
inline ModelConfig default_model_config() {
  using L = LayerSpec;
  ModelConfig c;
  c.layers = {L::ic(0.01, true),  L::conv(16, 5, 2), L::relu(),    L::ic(0.05, true), L::conv(24, 5, 2),
              L::relu(),          L::ic(0.05, true), L::conv(32, 3, 2), L::relu(),    L::ic(0.05, true),
              L::conv(48, 3, 1),  L::relu(),         L::ic(0.05, true), L::conv(64, 3, 2), L::relu(),
              L::flatten(),       L::ic(0.05, false), L::fc(64),        L::relu(),    L::fc(2)};
  return c;
}

template <typename T>
using Layer = std::variant<ICBlock<T>, Conv2d<T>, ReLU<T>, Flatten<T>, Dense<T>>;

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    require(cfg_.input.size() == 3, ErrorKind::Config, "model input must be C x H x W");
    Shape shape{1, cfg_.input[0], cfg_.input[1], cfg_.input[2]};
    for (std::size_t i = 0; i < cfg_.layers.size(); ++i) {
      const LayerSpec& s = cfg_.layers[i];
      const std::string where = "layer " + std::to_string(i) + " (" + kind_name(s.kind) + ")";
      switch (s.kind) {
        case LayerSpec::Kind::IC:
          require(shape.size() == 4 || shape.size() == 2, ErrorKind::Config, where + " needs a map or vector input");
          require(!s.spatial || shape.size() == 4, ErrorKind::Config, where + ": spatial dropout needs a map input");
          layers_.emplace_back(ICBlock<T>(shape[1], s.p, s.spatial, derive_seed(0, "dropout", i)));
          break;
        case LayerSpec::Kind::Conv: {
          require(shape.size() == 4, ErrorKind::Config, where + " needs a map input");
          require(s.units > 0 && s.kernel > 0 && s.stride > 0, ErrorKind::Config, where + " has a zero extent");
          Conv2d<T> conv(shape[1], s.units, s.kernel, s.stride, s.kernel / 2);
          shape = conv.output_shape(shape);
          layers_.emplace_back(std::move(conv));
          break;
        }
        case LayerSpec::Kind::ReLU: layers_.emplace_back(ReLU<T>{}); break;
        case LayerSpec::Kind::Flatten:
          shape = {shape[0], shape_size(shape) / shape[0]};
          layers_.emplace_back(Flatten<T>{});
          break;
        case LayerSpec::Kind::FC:
          require(shape.size() == 2, ErrorKind::Config, where + " needs a flattened input");
          require(s.units > 0, ErrorKind::Config, where + " has zero units");
          layers_.emplace_back(Dense<T>(shape[1], s.units));
          shape = {shape[0], s.units};
          break;
      }
    }
    out_shape_ = shape;
    acts_.resize(layers_.size() + 1);
    grads_.resize(layers_.size() + 1);
  }

  const ModelConfig& config() const { return cfg_; }

  // Frees activation, gradient and scratch buffers; parameters, running
  // statistics and outputs are unaffected.
  void release_buffers() {
    for (auto& l : layers_) std::visit([](auto& x) { x.release(); }, l);
    for (auto& t : acts_) t = {};
    for (auto& t : grads_) t = {};
  }
  std::size_t output_units() const { return out_shape_.size() == 2 ? out_shape_[1] : shape_size(out_shape_); }
  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }

  // Fan-in scaled uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero
  // biases, unit BatchNorm scale, zero shift, fresh running statistics.
  void init(std::uint64_t seed) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::visit(
          [&](auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2d<T>> || std::is_same_v<L, Dense<T>>) {
              const std::size_t fan_in = l.w.size() / l.w.dim(0);
              const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
              const std::uint64_t stream = derive_seed(0, "init", i);
              for (std::size_t j = 0; j < l.w.size(); ++j)
                l.w[j] = static_cast<T>(limit * (2 * uniform_at(seed, stream, j) - 1));
              l.b.fill(T{0});
            } else if constexpr (std::is_same_v<L, ICBlock<T>>) {
              l.bn.gamma.fill(T{1});
              l.bn.beta.fill(T{0});
              l.bn.running_mean.fill(T{0});
              l.bn.running_var.fill(T{1});
            }
          },
          layers_[i]);
    }
  }

  // x: N x C x H x W. Returns N x outputs.
  const Tensor<T>& forward(const Tensor<T>& x, RunMode mode, std::uint64_t seed = 0) {
    require(x.rank() == 4 && x.dim(1) == cfg_.input[0] && x.dim(2) == cfg_.input[1] && x.dim(3) == cfg_.input[2],
            ErrorKind::ShapeMismatch, "model input: expected N x " + to_string(cfg_.input) + ", got " + to_string(x.shape()));
    acts_[0] = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::visit(
          [&](auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, ICBlock<T>>)
              l.forward(acts_[i], acts_[i + 1], mode, seed);
            else
              l.forward(acts_[i], acts_[i + 1]);
          },
          layers_[i]);
    }
    return acts_.back();
  }

  // Accumulates parameter gradients for the last forward pass and returns
  // the gradient with respect to the model input.
  const Tensor<T>& backward(const Tensor<T>& dy) {
    require_shape(dy.shape(), acts_.back().shape(), "model upstream gradient");
    grads_.back() = dy;
    for (std::size_t i = layers_.size(); i-- > 0;)
      std::visit([&](auto& l) { l.backward(grads_[i + 1], grads_[i]); }, layers_[i]);
    return grads_[0];
  }

  void zero_grad() {
    for (auto& p : params()) p.grad->fill(T{0});
  }

  // Trainable parameters in a fixed order.
  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string tag = std::to_string(i) + ".";
      std::visit(
          [&](auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2d<T>> || std::is_same_v<L, Dense<T>>) {
              out.push_back({tag + "w", &l.w, &l.dw});
              out.push_back({tag + "b", &l.b, &l.db});
            } else if constexpr (std::is_same_v<L, ICBlock<T>>) {
              out.push_back({tag + "gamma", &l.bn.gamma, &l.bn.dgamma});
              out.push_back({tag + "beta", &l.bn.beta, &l.bn.dbeta});
            }
          },
          layers_[i]);
    }
    return out;
  }

  // BatchNorm running statistics in a fixed order.
  std::vector<Tensor<T>*> buffers() {
    std::vector<Tensor<T>*> out;
    for (auto& layer : layers_)
      if (auto* ic = std::get_if<ICBlock<T>>(&layer)) {
        out.push_back(&ic->bn.running_mean);
        out.push_back(&ic->bn.running_var);
      }
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto& p : params()) n += p.value->size();
    return n;
  }

  // Copies parameters and statistics from a model of the same config,
  // converting the element type.
  template <typename U>
  void load_from(Model<U>& other) {
    require(other.config() == cfg_, ErrorKind::Config, "model configs differ");
    auto dst = params();
    auto src = other.params();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].value = src[i].value->template cast<T>();
    auto db = buffers();
    auto sb = other.buffers();
    for (std::size_t i = 0; i < db.size(); ++i) *db[i] = sb[i]->template cast<T>();
  }

  // Activation fed into layer i during the last forward pass.
  const Tensor<T>& activation(std::size_t i) const { return acts_.at(i); }
  // Gradient with respect to that activation after the last backward pass.
  const Tensor<T>& activation_grad(std::size_t i) const { return grads_.at(i); }

 private:
  ModelConfig cfg_;
  std::vector<Layer<T>> layers_;
  Shape out_shape_;
  std::vector<Tensor<T>> acts_, grads_;
};

// Trainable parameter count computed from the config alone.
inline std::size_t param_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  std::size_t ch = cfg.input.at(0), h = cfg.input.at(1), w = cfg.input.at(2), flat = 0;
  bool flattened = false;
  for (const auto& s : cfg.layers) {
    const std::size_t width = flattened ? flat : ch;
    switch (s.kind) {
      case LayerSpec::Kind::IC: n += 2 * width; break;
      case LayerSpec::Kind::Conv:
        n += s.units * ch * s.kernel * s.kernel + s.units;
        h = conv_out_dim(h, s.kernel, s.stride, s.kernel / 2);
        w = conv_out_dim(w, s.kernel, s.stride, s.kernel / 2);
        ch = s.units;
        break;
      case LayerSpec::Kind::ReLU: break;
      case LayerSpec::Kind::Flatten:
        flat = ch * h * w;
        flattened = true;
        break;
      case LayerSpec::Kind::FC:
        n += s.units * flat + s.units;
        flat = s.units;
        break;
    }
  }
  return n;
}

}  // namespace laneil::nn
