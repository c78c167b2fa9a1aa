#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "laneil/core/rng.hpp"
#include "laneil/nn/model.hpp"
#include "laneil/nn/optim.hpp"

namespace laneil::nn {

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t kinks = 0;  // samples skipped because a ReLU flipped inside +-eps
  double max_rel64 = 0.0;
  double max_rel32 = 0.0;
  // |a32 - n| over the largest 64-bit gradient magnitude in the tensor
  double max_scaled32 = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;

  double max_rel64() const {
    double m = 0;
    for (const auto& p : params) m = std::max(m, p.max_rel64);
    return m;
  }
  double max_rel32() const {
    double m = 0;
    for (const auto& p : params) m = std::max(m, p.max_rel32);
    return m;
  }
  double max_scaled32() const {
    double m = 0;
    for (const auto& p : params) m = std::max(m, p.max_scaled32);
    return m;
  }
  std::size_t checked() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.checked;
    return n;
  }
};

struct GradCheckOptions {
  double eps = 1e-4;
  bool five_point = true;      // O(eps^4) stencil; plain central differences otherwise
  int max_shrink = 2;          // retries at eps/10, eps/100 when a ReLU flips
  std::size_t per_param = 20;  // sampled entries per parameter tensor
  std::uint64_t seed = 0;      // picks the sampled entries
  std::uint64_t dropout_seed = 1;
};

namespace detail {

// Fingerprint of the sign pattern of every ReLU input in the last forward.
template <typename T>
std::uint64_t relu_pattern(const Model<T>& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& layer : model.layers())
    if (const auto* r = std::get_if<ReLU<T>>(&layer)) {
      const auto& x = r->input();
      for (std::size_t i = 0; i < x.size(); ++i) {
        h ^= x[i] > T{0} ? 1u : 2u;
        h *= 0x100000001b3ULL;
      }
    }
  return h;
}

template <typename F>
double derivative(F&& f, double eps, bool five_point) {
  if (!five_point) return (f(eps) - f(-eps)) / (2 * eps);
  return (8 * (f(eps) - f(-eps)) - (f(2 * eps) - f(-2 * eps))) / (12 * eps);
}

}  // namespace detail

// Finite differences of the Train-mode MSE loss, with dropout masks
// frozen by a fixed dropout seed. The 64-bit analytic gradient and a 32-bit
// copy of the model are both compared against the 64-bit numeric gradient.
// An evaluation that changes any ReLU's active set straddles a kink, where
// the loss is not differentiable. The step is shrunk and retried; if every
// step flips a unit the entry is skipped and another one drawn.
inline GradCheckReport grad_check(Model<double>& model, const Tensor<double>& x, const Tensor<double>& target,
                                  const GradCheckOptions& opt = {}) {
  auto saved_buffers = model.buffers();
  std::vector<Tensor<double>> snapshot;
  for (auto* b : saved_buffers) snapshot.push_back(*b);

  Tensor<double> dy;
  model.zero_grad();
  mse_loss(model.forward(x, RunMode::Train, opt.dropout_seed), target, &dy);
  const std::uint64_t base_pattern = detail::relu_pattern(model);
  model.backward(dy);
  std::vector<Tensor<double>> grad64;
  for (auto& p : model.params()) grad64.push_back(*p.grad);

  Model<float> single(model.config());
  single.load_from(model);
  Tensor<float> dyf;
  single.zero_grad();
  mse_loss(single.forward(x.cast<float>(), RunMode::Train, opt.dropout_seed), target.cast<float>(), &dyf);
  single.backward(dyf);
  std::vector<Tensor<float>> grad32;
  for (auto& p : single.params()) grad32.push_back(*p.grad);

  auto loss_at = [&](std::uint64_t& pattern) {
    const double l = mse_loss(model.forward(x, RunMode::Train, opt.dropout_seed), target);
    pattern = detail::relu_pattern(model);
    return l;
  };

  GradCheckReport report;
  auto params = model.params();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ParamCheck pc;
    pc.name = params[pi].name;
    Tensor<double>& w = *params[pi].value;
    double scale = 0;
    for (std::size_t j = 0; j < w.size(); ++j) scale = std::max(scale, std::abs(grad64[pi][j]));
    RandomStream rng(derive_seed(opt.seed, "gradcheck", pi), "pick");
    const auto order = permutation(w.size(), rng);
    for (std::size_t idx : order) {
      if (pc.checked >= opt.per_param || pc.kinks >= 4 * opt.per_param) break;
      const double orig = w[idx];
      bool kink = true;
      double numeric = 0;
      for (int shrink = 0; shrink <= opt.max_shrink && kink; ++shrink) {
        kink = false;
        numeric = detail::derivative(
            [&](double d) {
              w[idx] = orig + d;
              std::uint64_t pattern = 0;
              const double l = loss_at(pattern);
              kink |= pattern != base_pattern;
              return l;
            },
            opt.eps * std::pow(0.1, shrink), opt.five_point);
      }
      w[idx] = orig;
      if (kink) {
        ++pc.kinks;
        continue;
      }
      pc.max_rel64 = std::max(pc.max_rel64, relative_error(grad64[pi][idx], numeric));
      pc.max_rel32 = std::max(pc.max_rel32, relative_error(grad32[pi][idx], numeric));
      if (scale > 0) pc.max_scaled32 = std::max(pc.max_scaled32, std::abs(grad32[pi][idx] - numeric) / scale);
      ++pc.checked;
    }
    report.params.push_back(pc);
  }
  for (std::size_t i = 0; i < saved_buffers.size(); ++i) *saved_buffers[i] = snapshot[i];
  return report;
}

// ---- single-layer checks ------------------------------------------------

template <typename T>
void layer_forward(ICBlock<T>& l, const Tensor<T>& x, Tensor<T>& y, std::uint64_t seed) {
  l.forward(x, y, RunMode::Train, seed);
}
template <typename T>
void layer_forward(BatchNorm<T>& l, const Tensor<T>& x, Tensor<T>& y, std::uint64_t) {
  l.forward(x, y, RunMode::Train);
}
template <typename T>
void layer_forward(Dropout<T>& l, const Tensor<T>& x, Tensor<T>& y, std::uint64_t seed) {
  l.forward(x, y, RunMode::Train, seed);
}
template <typename T, typename L>
void layer_forward(L& l, const Tensor<T>& x, Tensor<T>& y, std::uint64_t) {
  l.forward(x, y);
}

template <typename T>
std::vector<std::pair<Tensor<T>*, Tensor<T>*>> layer_params(Conv2d<T>& l) {
  return {{&l.w, &l.dw}, {&l.b, &l.db}};
}
template <typename T>
std::vector<std::pair<Tensor<T>*, Tensor<T>*>> layer_params(Dense<T>& l) {
  return {{&l.w, &l.dw}, {&l.b, &l.db}};
}
template <typename T>
std::vector<std::pair<Tensor<T>*, Tensor<T>*>> layer_params(BatchNorm<T>& l) {
  return {{&l.gamma, &l.dgamma}, {&l.beta, &l.dbeta}};
}
template <typename T>
std::vector<std::pair<Tensor<T>*, Tensor<T>*>> layer_params(ICBlock<T>& l) {
  return layer_params(l.bn);
}
template <typename T>
std::vector<std::pair<Tensor<T>*, Tensor<T>*>> layer_params(ReLU<T>&) {
  return {};
}
template <typename T>
std::vector<std::pair<Tensor<T>*, Tensor<T>*>> layer_params(Flatten<T>&) {
  return {};
}
template <typename T>
std::vector<std::pair<Tensor<T>*, Tensor<T>*>> layer_params(Dropout<T>&) {
  return {};
}

template <typename L>
constexpr bool has_scale(const L&) {
  return false;
}
template <typename T>
constexpr bool has_scale(const BatchNorm<T>&) {
  return true;
}
template <typename T>
constexpr bool has_scale(const ICBlock<T>&) {
  return true;
}

struct LayerCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel64 = 0.0;
  double max_rel32 = 0.0;
};

// Checks one layer against the scalar loss sum(r * y) for a fixed random r.
// `make` is a template lambda building the layer for a given element type.
// Parameters are randomized (weights around 0, BatchNorm scale around 1);
// inputs are kept at least `margin` away from zero so ReLU kinks are not
// straddled. Covers the input gradient and every parameter.
template <typename Make>
LayerCheck check_layer(const std::string& name, Make make, const Shape& in_shape, std::uint64_t seed,
                       double margin = 0.0, const GradCheckOptions& opt = {}) {
  auto ld = make.template operator()<double>();
  auto lf = make.template operator()<float>();
  RandomStream rng(seed, "layer-check");
  {
    auto pd = layer_params(ld);
    for (std::size_t i = 0; i < pd.size(); ++i) {
      Tensor<double>& t = *pd[i].first;
      const bool scale = has_scale(ld) && i == 0;
      for (std::size_t j = 0; j < t.size(); ++j) t[j] = scale ? rng.uniform(0.7, 1.3) : rng.uniform(-0.5, 0.5);
    }
    auto pf = layer_params(lf);
    for (std::size_t i = 0; i < pd.size(); ++i) *pf[i].first = pd[i].first->template cast<float>();
  }
  Tensor<double> x(in_shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = rng.normal();
    if (margin > 0 && std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
    x[i] = v;
  }
  Tensor<double> y;
  layer_forward(ld, x, y, opt.dropout_seed);
  Tensor<double> r(y.shape());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = rng.uniform(-1, 1);
  auto loss = [&]() {
    Tensor<double> out;
    layer_forward(ld, x, out, opt.dropout_seed);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += r[i] * out[i];
    return s;
  };

  for (auto& p : layer_params(ld)) p.second->fill(0.0);
  Tensor<double> dx64;
  layer_forward(ld, x, y, opt.dropout_seed);
  ld.backward(r, dx64);
  std::vector<Tensor<double>> g64;
  for (auto& p : layer_params(ld)) g64.push_back(*p.second);

  Tensor<float> yf, dx32;
  const Tensor<float> xf = x.cast<float>();
  layer_forward(lf, xf, yf, opt.dropout_seed);
  lf.backward(r.cast<float>(), dx32);
  std::vector<Tensor<float>> g32;
  for (auto& p : layer_params(lf)) g32.push_back(*p.second);

  LayerCheck out{name};
  auto probe = [&](Tensor<double>& values, auto analytic64, auto analytic32, std::uint64_t stream) {
    RandomStream pick(seed, stream);
    const auto order = permutation(values.size(), pick);
    const std::size_t n = std::min(opt.per_param, values.size());
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t idx = order[k];
      const double orig = values[idx];
      const double numeric = detail::derivative(
          [&](double d) {
            values[idx] = orig + d;
            return loss();
          },
          opt.eps, opt.five_point);
      values[idx] = orig;
      out.max_rel64 = std::max(out.max_rel64, relative_error(analytic64(idx), numeric));
      out.max_rel32 = std::max(out.max_rel32, relative_error(analytic32(idx), numeric));
      ++out.checked;
    }
  };
  probe(x, [&](std::size_t i) { return dx64[i]; }, [&](std::size_t i) { return static_cast<double>(dx32[i]); }, 0);
  auto pd = layer_params(ld);
  for (std::size_t i = 0; i < pd.size(); ++i)
    probe(
        *pd[i].first, [&](std::size_t j) { return g64[i][j]; },
        [&](std::size_t j) { return static_cast<double>(g32[i][j]); }, i + 1);
  return out;
}

// Every layer type in both of its configurations, batch 4.
inline std::vector<LayerCheck> check_all_layers(std::uint64_t seed = 7, const GradCheckOptions& opt = {}) {
  std::vector<LayerCheck> out;
  out.push_back(check_layer(
      "conv 5x5 s2", []<typename T>() { return Conv2d<T>(3, 4, 5, 2, 2); }, {4, 3, 9, 10}, seed, 0.0, opt));
  out.push_back(check_layer(
      "conv 3x3 s1", []<typename T>() { return Conv2d<T>(2, 3, 3, 1, 1); }, {4, 2, 5, 6}, seed + 1, 0.0, opt));
  out.push_back(check_layer("dense", []<typename T>() { return Dense<T>(12, 5); }, {4, 12}, seed + 2, 0.0, opt));
  out.push_back(check_layer("relu", []<typename T>() { return ReLU<T>{}; }, {4, 3, 4, 5}, seed + 3, 0.05, opt));
  out.push_back(check_layer("flatten", []<typename T>() { return Flatten<T>{}; }, {4, 3, 2, 2}, seed + 4, 0.0, opt));
  out.push_back(
      check_layer("batchnorm map", []<typename T>() { return BatchNorm<T>(3); }, {4, 3, 3, 4}, seed + 5, 0.0, opt));
  out.push_back(
      check_layer("batchnorm dense", []<typename T>() { return BatchNorm<T>(6); }, {4, 6}, seed + 6, 0.0, opt));
  out.push_back(check_layer(
      "dropout spatial", []<typename T>() { return Dropout<T>(0.5, true, 11); }, {4, 5, 3, 3}, seed + 7, 0.0, opt));
  out.push_back(check_layer(
      "dropout dense", []<typename T>() { return Dropout<T>(0.3, false, 12); }, {4, 10}, seed + 8, 0.0, opt));
  out.push_back(check_layer(
      "ic spatial", []<typename T>() { return ICBlock<T>(4, 0.25, true, 13); }, {4, 4, 3, 3}, seed + 9, 0.0, opt));
  out.push_back(check_layer(
      "ic dense", []<typename T>() { return ICBlock<T>(7, 0.2, false, 14); }, {4, 7}, seed + 10, 0.0, opt));
  return out;
}

// The default network at batch 4: inputs in [0, 1] like preprocessed frames,
// targets in [-1, 1] like wheel commands.
inline GradCheckReport check_default_model(std::uint64_t seed = 11, const GradCheckOptions& opt = {}) {
  Model<double> m(default_model_config());
  m.init(seed);
  RandomStream rng(seed, "gradcheck-batch");
  Tensor<double> x({4, 3, 32, 64}), t({4, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1, 1);
  return grad_check(m, x, t, opt);
}

}  // namespace laneil::nn
