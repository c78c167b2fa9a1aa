#pragma once

#include <cmath>
#include <vector>

#include "laneil/nn/model.hpp"

namespace laneil::nn {

// Mean squared error over all N x 2 entries; fills the gradient.
template <typename T>
T mse_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* grad = nullptr) {
  require_shape(pred.shape(), target.shape(), "mse target");
  require(!pred.empty(), ErrorKind::InvalidArgument, "mse of an empty batch");
  const T n = static_cast<T>(pred.size());
  T sum{0};
  if (grad) grad->resize(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T e = pred[i] - target[i];
    sum += e * e;
    if (grad) (*grad)[i] = T{2} * e / n;
  }
  return sum / n;
}

struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  std::uint32_t t = 0;
};

// One bias-corrected Adam update over the given parameters.
template <typename T>
void adam_step(const std::vector<ParamRef<T>>& params, AdamState<T>& st, const AdamSettings& s) {
  if (st.m.size() != params.size()) {
    st.m.clear();
    st.v.clear();
    for (const auto& p : params) {
      st.m.emplace_back(p.value->shape());
      st.v.emplace_back(p.value->shape());
    }
  }
  ++st.t;
  const T b1 = static_cast<T>(s.beta1), b2 = static_cast<T>(s.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(s.beta1, st.t));
  const T c2 = static_cast<T>(1.0 - std::pow(s.beta2, st.t));
  const T lr = static_cast<T>(s.lr), eps = static_cast<T>(s.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& w = *params[i].value;
    const Tensor<T>& g = *params[i].grad;
    Tensor<T>& m = st.m[i];
    Tensor<T>& v = st.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const T mh = m[j] / c1;
      const T vh = v[j] / c2;
      w[j] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

}  // namespace laneil::nn
