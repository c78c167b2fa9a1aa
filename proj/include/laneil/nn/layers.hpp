#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "laneil/core/rng.hpp"
#include "laneil/nn/gemm.hpp"
#include "laneil/nn/tensor.hpp"

namespace laneil::nn {

enum class RunMode { Train, Eval };

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  require(in + 2 * pad >= k && stride > 0, ErrorKind::ShapeMismatch, "convolution window larger than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

// Drops contents and capacity.
template <typename... V>
void free_all(V&... v) {
  ((v = V()), ...);
}

// 2-D cross-correlation over N x C x H x W input with F x C x k x k weights.
// Lowered to matrix products through an im2col buffer of shape
// (C*k*k) x (N*H'*W'), which is kept for the backward pass.
template <typename T>
struct Conv2d {
  std::size_t in_ch = 0, out_ch = 0, k = 1, stride = 1, pad = 0;
  Tensor<T> w, b, dw, db;

  Conv2d() = default;
  Conv2d(std::size_t c, std::size_t f, std::size_t kernel, std::size_t s, std::size_t p)
      : in_ch(c), out_ch(f), k(kernel), stride(s), pad(p), w({f, c, kernel, kernel}), b({f}), dw(w.shape()), db({f}) {}

  Shape output_shape(const Shape& in) const {
    require(in.size() == 4 && in[1] == in_ch, ErrorKind::ShapeMismatch,
            "conv expects N x " + std::to_string(in_ch) + " x H x W input, got " + to_string(in));
    return {in[0], out_ch, conv_out_dim(in[2], k, stride, pad), conv_out_dim(in[3], k, stride, pad)};
  }

  void forward(const Tensor<T>& x, Tensor<T>& y) {
    require_shape(w.shape(), {out_ch, in_ch, k, k}, "conv weights");
    y.resize(output_shape(x.shape()));
    in_shape_ = x.shape();
    const std::size_t n = x.dim(0), oh = y.dim(2), ow = y.dim(3), P = oh * ow, NP = n * P, K = in_ch * k * k;
    im2col(x, oh, ow);
    tmp_.assign(out_ch * NP, T{0});
    gemm_acc(out_ch, NP, K, w.data(), K, cols_.data(), NP, tmp_.data(), NP);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t f = 0; f < out_ch; ++f) {
        const T* src = tmp_.data() + f * NP + s * P;
        T* dst = y.data() + (s * out_ch + f) * P;
        const T bias = b[f];
        for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bias;
      }
  }

  // Accumulates dw, db and writes dx.
  void backward(const Tensor<T>& dy, Tensor<T>& dx) {
    const std::size_t n = in_shape_[0], oh = dy.dim(2), ow = dy.dim(3), P = oh * ow, NP = n * P, K = in_ch * k * k;
    require_shape(dy.shape(), {n, out_ch, oh, ow}, "conv upstream gradient");
    tmp_.resize(out_ch * NP);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t f = 0; f < out_ch; ++f) {
        const T* src = dy.data() + (s * out_ch + f) * P;
        T* dst = tmp_.data() + f * NP + s * P;
        double acc = 0;
        for (std::size_t p = 0; p < P; ++p) {
          dst[p] = src[p];
          acc += src[p];
        }
        db[f] += static_cast<T>(acc);
      }
    gemm_nt_acc(out_ch, K, NP, tmp_.data(), NP, cols_.data(), NP, dw.data(), K);
    wT_.resize(K * out_ch);
    transpose(out_ch, K, w.data(), wT_.data());
    dcols_.assign(K * NP, T{0});
    gemm_acc(K, NP, out_ch, wT_.data(), out_ch, tmp_.data(), NP, dcols_.data(), NP);
    dx.resize(in_shape_);
    col2im(dx, oh, ow);
  }

 private:
  // Output columns [lo, hi) whose tap j lands inside a row of width W.
  std::pair<std::size_t, std::size_t> valid_columns(std::size_t j, std::size_t W, std::size_t ow) const {
    const std::size_t lo = j >= pad ? 0 : (pad - j + stride - 1) / stride;
    const std::size_t hi = W + pad > j ? std::min(ow, (W + pad - j - 1) / stride + 1) : 0;
    return {std::min(lo, ow), std::max(std::min(lo, ow), hi)};
  }

  void im2col(const Tensor<T>& x, std::size_t oh, std::size_t ow) {
    const std::size_t n = x.dim(0), H = x.dim(2), W = x.dim(3), P = oh * ow, NP = n * P;
    cols_.resize(in_ch * k * k * NP);
    // a few samples at a time so their input planes stay cached across the k*k taps
    constexpr std::size_t kBlock = 16;
    for (std::size_t s0 = 0; s0 < n; s0 += kBlock)
      for (std::size_t c = 0; c < in_ch; ++c)
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const auto [lo, hi] = valid_columns(j, W, ow);
            T* row = cols_.data() + ((c * k + i) * k + j) * NP;
            for (std::size_t s = s0; s < std::min(n, s0 + kBlock); ++s) {
              const T* plane = x.data() + (s * in_ch + c) * H * W;
              for (std::size_t oy = 0; oy < oh; ++oy) {
                T* out = row + s * P + oy * ow;
                const long iy = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
                if (iy < 0 || iy >= static_cast<long>(H)) {
                  for (std::size_t ox = 0; ox < ow; ++ox) out[ox] = T{0};
                  continue;
                }
                const T* line = plane + iy * W + j;
                for (std::size_t ox = 0; ox < lo; ++ox) out[ox] = T{0};
                for (std::size_t ox = lo; ox < hi; ++ox)
                  out[ox] = line[static_cast<std::ptrdiff_t>(ox * stride) - static_cast<std::ptrdiff_t>(pad)];
                for (std::size_t ox = hi; ox < ow; ++ox) out[ox] = T{0};
              }
            }
          }
  }

  void col2im(Tensor<T>& dx, std::size_t oh, std::size_t ow) {
    const std::size_t n = dx.dim(0), H = dx.dim(2), W = dx.dim(3), P = oh * ow, NP = n * P;
    dx.fill(T{0});
    for (std::size_t c = 0; c < in_ch; ++c)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const T* row = dcols_.data() + ((c * k + i) * k + j) * NP;
          for (std::size_t s = 0; s < n; ++s) {
            T* plane = dx.data() + (s * in_ch + c) * H * W;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const long iy = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(H)) continue;
              const T* in = row + s * P + oy * ow;
              T* line = plane + iy * W + j;
              const auto [lo, hi] = valid_columns(j, W, ow);
              for (std::size_t ox = lo; ox < hi; ++ox)
                line[static_cast<std::ptrdiff_t>(ox * stride) - static_cast<std::ptrdiff_t>(pad)] += in[ox];
            }
          }
        }
  }

  Shape in_shape_;
  std::vector<T> cols_, dcols_, tmp_, wT_;

 public:
  void release() { free_all(cols_, dcols_, tmp_, wT_); }
};

// y = W x + b over N x in rows; W is out x in.
template <typename T>
struct Dense {
  std::size_t in = 0, out = 0;
  Tensor<T> w, b, dw, db;

  Dense() = default;
  Dense(std::size_t i, std::size_t o) : in(i), out(o), w({o, i}), b({o}), dw({o, i}), db({o}) {}

  void forward(const Tensor<T>& x, Tensor<T>& y) {
    require(x.rank() == 2 && x.dim(1) == in, ErrorKind::ShapeMismatch,
            "dense expects N x " + std::to_string(in) + " input, got " + to_string(x.shape()));
    require_shape(w.shape(), {out, in}, "dense weights");
    const std::size_t n = x.dim(0);
    x_ = x;
    y.resize({n, out});
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t o = 0; o < out; ++o) y[s * out + o] = b[o];
    wT_.resize(in * out);
    transpose(out, in, w.data(), wT_.data());
    gemm_acc(n, out, in, x.data(), in, wT_.data(), out, y.data(), out);
  }

  void backward(const Tensor<T>& dy, Tensor<T>& dx) {
    const std::size_t n = x_.dim(0);
    require_shape(dy.shape(), {n, out}, "dense upstream gradient");
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t o = 0; o < out; ++o) db[o] += dy[s * out + o];
    dyT_.resize(out * n);
    transpose(n, out, dy.data(), dyT_.data());
    xT_.resize(in * n);
    transpose(n, in, x_.data(), xT_.data());
    gemm_nt_acc(out, in, n, dyT_.data(), n, xT_.data(), n, dw.data(), in);
    dx.resize({n, in});
    dx.fill(T{0});
    gemm_acc(n, in, out, dy.data(), out, w.data(), in, dx.data(), in);
  }

  void release() {
    x_ = {};
    free_all(wT_, dyT_, xT_);
  }

 private:
  Tensor<T> x_;
  std::vector<T> wT_, dyT_, xT_;
};

template <typename T>
struct ReLU {
  void forward(const Tensor<T>& x, Tensor<T>& y) {
    x_ = x;
    y.resize(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  }

  void backward(const Tensor<T>& dy, Tensor<T>& dx) {
    require_shape(dy.shape(), x_.shape(), "relu upstream gradient");
    dx.resize(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x_[i] > T{0} ? dy[i] : T{0};
  }

  // Pre-activations of the last forward pass.
  const Tensor<T>& input() const { return x_; }
  void release() { x_ = {}; }

 private:
  Tensor<T> x_;
};

template <typename T>
struct Flatten {
  void forward(const Tensor<T>& x, Tensor<T>& y) {
    in_shape_ = x.shape();
    y = x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }

  void backward(const Tensor<T>& dy, Tensor<T>& dx) { dx = dy.reshaped(in_shape_); }
  void release() {}

 private:
  Shape in_shape_;
};

// Batch normalization per channel (N x C x H x W input, statistics over
// N, H, W) or per unit (N x C input, statistics over N).
template <typename T>
struct BatchNorm {
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  std::size_t channels = 0;
  Tensor<T> gamma, beta, dgamma, dbeta, running_mean, running_var;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t c)
      : channels(c),
        gamma({c}, T{1}),
        beta({c}),
        dgamma({c}),
        dbeta({c}),
        running_mean({c}),
        running_var({c}, T{1}) {}

  void forward(const Tensor<T>& x, Tensor<T>& y, RunMode mode) {
    require((x.rank() == 4 || x.rank() == 2) && x.dim(1) == channels, ErrorKind::ShapeMismatch,
            "batchnorm expects N x " + std::to_string(channels) + " [x H x W] input, got " + to_string(x.shape()));
    mode_ = mode;
    const std::size_t n = x.dim(0), inner = x.size() / (n * channels), m = n * inner;
    y.resize(x.shape());
    xhat_.resize(x.shape());
    inv_std_.assign(channels, T{0});
    if (mode == RunMode::Train)
      require(n >= 2, ErrorKind::InvalidArgument, "batchnorm in train mode needs a batch of at least 2");
    for (std::size_t c = 0; c < channels; ++c) {
      T mean, inv;
      if (mode == RunMode::Train) {
        double sum = 0;
        for (std::size_t s = 0; s < n; ++s) {
          const T* p = x.data() + (s * channels + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) sum += p[i];
        }
        const double mean_d = sum / static_cast<double>(m);
        double sq = 0;
        for (std::size_t s = 0; s < n; ++s) {
          const T* p = x.data() + (s * channels + c) * inner;
          for (std::size_t i = 0; i < inner; ++i) sq += (p[i] - mean_d) * (p[i] - mean_d);
        }
        mean = static_cast<T>(mean_d);
        const T var = static_cast<T>(sq / static_cast<double>(m));
        inv = T{1} / std::sqrt(var + static_cast<T>(kEps));
        const T mom = static_cast<T>(kMomentum);
        running_mean[c] = (T{1} - mom) * running_mean[c] + mom * mean;
        running_var[c] = (T{1} - mom) * running_var[c] + mom * var * static_cast<T>(m) / static_cast<T>(m - 1);
      } else {
        mean = running_mean[c];
        inv = T{1} / std::sqrt(running_var[c] + static_cast<T>(kEps));
      }
      inv_std_[c] = inv;
      const T g = gamma[c], bt = beta[c];
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          const T h = (x[off + i] - mean) * inv;
          xhat_[off + i] = h;
          y[off + i] = g * h + bt;
        }
      }
    }
  }

  void backward(const Tensor<T>& dy, Tensor<T>& dx) {
    require_shape(dy.shape(), xhat_.shape(), "batchnorm upstream gradient");
    const std::size_t n = dy.dim(0), inner = dy.size() / (n * channels);
    const T m = static_cast<T>(n * inner);
    dx.resize(dy.shape());
    for (std::size_t c = 0; c < channels; ++c) {
      double acc_dy = 0, acc_dy_h = 0;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          acc_dy += dy[off + i];
          acc_dy_h += static_cast<double>(dy[off + i]) * xhat_[off + i];
        }
      }
      const T sum_dy = static_cast<T>(acc_dy), sum_dy_h = static_cast<T>(acc_dy_h);
      dgamma[c] += sum_dy_h;
      dbeta[c] += sum_dy;
      const T g = gamma[c], inv = inv_std_[c];
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          if (mode_ == RunMode::Train)
            dx[off + i] = g * inv * (dy[off + i] - sum_dy / m - xhat_[off + i] * sum_dy_h / m);
          else
            dx[off + i] = g * inv * dy[off + i];
        }
      }
    }
  }

  void release() {
    xhat_ = {};
    free_all(inv_std_);
  }

 private:
  RunMode mode_ = RunMode::Train;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

// Inverted dropout. The spatial variant drops whole (sample, channel) maps.
// Masks are a pure function of (seed, stream, counter) and are kept for the
// backward pass.
template <typename T>
struct Dropout {
  double p = 0.0;
  bool spatial = false;
  std::uint64_t stream = 0;

  Dropout() = default;
  Dropout(double prob, bool spatial_maps, std::uint64_t stream_id)
      : p(prob), spatial(spatial_maps), stream(stream_id) {
    require(p >= 0.0 && p < 1.0, ErrorKind::InvalidArgument, "dropout probability must lie in [0, 1)");
  }

  void forward(const Tensor<T>& x, Tensor<T>& y, RunMode mode, std::uint64_t seed) {
    active_ = mode == RunMode::Train && p > 0.0;
    y = x;
    if (!active_) return;
    mask_.resize(x.size());
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    if (spatial) {
      require(x.rank() >= 2, ErrorKind::ShapeMismatch, "spatial dropout needs N x C x ... input");
      const std::size_t maps = x.dim(0) * x.dim(1), inner = x.size() / maps;
      for (std::size_t m = 0; m < maps; ++m) {
        const T keep = uniform_at(seed, stream, m) >= p ? scale : T{0};
        for (std::size_t i = 0; i < inner; ++i) mask_[m * inner + i] = keep;
      }
    } else {
      for (std::size_t i = 0; i < x.size(); ++i) mask_[i] = uniform_at(seed, stream, i) >= p ? scale : T{0};
    }
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask_[i];
  }

  void backward(const Tensor<T>& dy, Tensor<T>& dx) {
    dx = dy;
    if (!active_) return;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
  }

  const std::vector<T>& mask() const { return mask_; }
  void release() { free_all(mask_); }

 private:
  bool active_ = false;
  std::vector<T> mask_;
};

// BatchNorm followed by (spatial) dropout, placed in front of a weight layer.
template <typename T>
struct ICBlock {
  BatchNorm<T> bn;
  Dropout<T> drop;

  ICBlock() = default;
  ICBlock(std::size_t channels, double p, bool spatial, std::uint64_t stream)
      : bn(channels), drop(p, spatial, stream) {}

  void forward(const Tensor<T>& x, Tensor<T>& y, RunMode mode, std::uint64_t seed) {
    bn.forward(x, mid_, mode);
    drop.forward(mid_, y, mode, seed);
  }

  void backward(const Tensor<T>& dy, Tensor<T>& dx) {
    drop.backward(dy, dmid_);
    bn.backward(dmid_, dx);
  }

  // BatchNorm output of the last forward pass (the dropout input).
  const Tensor<T>& normalized() const { return mid_; }
  void release() {
    bn.release();
    drop.release();
    mid_ = dmid_ = {};
  }

 private:
  Tensor<T> mid_, dmid_;
};

}  // namespace laneil::nn
