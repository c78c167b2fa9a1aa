#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "laneil/core/error.hpp"
#include "laneil/render/image.hpp"

namespace laneil {

// Network input: Y, U, V planes of 32x64 floats in [0, 1].
struct InputTensor {
  static constexpr int kChannels = 3;
  static constexpr int kHeight = 32;
  static constexpr int kWidth = 64;
  static constexpr std::size_t kSize = static_cast<std::size_t>(kChannels) * kHeight * kWidth;

  std::vector<float> data = std::vector<float>(kSize, 0.0f);

  float& at(int ch, int row, int col) { return data[(static_cast<std::size_t>(ch) * kHeight + row) * kWidth + col]; }
  float at(int ch, int row, int col) const {
    return data[(static_cast<std::size_t>(ch) * kHeight + row) * kWidth + col];
  }

  friend bool operator==(const InputTensor&, const InputTensor&) = default;
};

namespace preprocess {

inline constexpr int kFrameHeight = 480;
inline constexpr int kFrameWidth = 640;
inline constexpr int kCropRows = kFrameHeight / 3;

// Keeps rows 160..479 of a 480-row frame.
inline render::Image crop_top_third(const render::Image& img) {
  require(img.height == kFrameHeight, ErrorKind::ShapeMismatch,
          "crop_top_third expects " + std::to_string(kFrameHeight) + " rows, got " + std::to_string(img.height));
  render::Image out(img.height - kCropRows, img.width);
  std::copy(img.data.begin() + static_cast<std::ptrdiff_t>(img.offset(kCropRows, 0)), img.data.end(), out.data.begin());
  return out;
}

// Bilinear sample with half-pixel-centered mapping
// src = (dst + 0.5) * (src_extent / dst_extent) - 0.5, clamped to the source.
// `pixel(row, col)` returns the source Rgb; values are returned unrounded.
template <typename PixelFn>
std::array<double, 3> bilinear_value(const PixelFn& pixel, int src_h, int src_w, int dst_h, int dst_w, int dy,
                                     int dx) {
  const double sy = std::clamp((dy + 0.5) * (static_cast<double>(src_h) / dst_h) - 0.5, 0.0, src_h - 1.0);
  const double sx = std::clamp((dx + 0.5) * (static_cast<double>(src_w) / dst_w) - 0.5, 0.0, src_w - 1.0);
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, src_h - 1);
  const int x1 = std::min(x0 + 1, src_w - 1);
  const double fy = sy - y0, fx = sx - x0;
  const render::Rgb p00 = pixel(y0, x0), p01 = pixel(y0, x1);
  const render::Rgb p10 = pixel(y1, x0), p11 = pixel(y1, x1);
  std::array<double, 3> out{};
  for (int ch = 0; ch < 3; ++ch) {
    out[ch] = (1.0 - fy) * ((1.0 - fx) * p00[ch] + fx * p01[ch]) + fy * ((1.0 - fx) * p10[ch] + fx * p11[ch]);
  }
  return out;
}

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0)); }

template <typename PixelFn>
render::Image resize_bilinear_from(const PixelFn& pixel, int src_h, int src_w, int dst_h, int dst_w) {
  render::Image out(dst_h, dst_w);
  for (int y = 0; y < dst_h; ++y) {
    for (int x = 0; x < dst_w; ++x) {
      const auto v = bilinear_value(pixel, src_h, src_w, dst_h, dst_w, y, x);
      out.set(y, x, {to_byte(v[0]), to_byte(v[1]), to_byte(v[2])});
    }
  }
  return out;
}

inline render::Image resize_bilinear(const render::Image& img, int dst_h = InputTensor::kHeight,
                                     int dst_w = InputTensor::kWidth) {
  require(img.height > 0 && img.width > 0, ErrorKind::ShapeMismatch, "resize_bilinear: empty image");
  auto pixel = [&img](int r, int c) { return img.at(r, c); };
  return resize_bilinear_from(pixel, img.height, img.width, dst_h, dst_w);
}

// Full-range BT.601 with +128 chroma offset, scaled by 1/255 and clamped to [0, 1].
inline void rgb_to_yuv_pixel(render::Rgb p, float out[3]) {
  const double r = p.r, g = p.g, b = p.b;
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  const double u = -0.169 * r - 0.331 * g + 0.5 * b + 128.0;
  const double v = 0.5 * r - 0.419 * g - 0.081 * b + 128.0;
  out[0] = static_cast<float>(std::clamp(y / 255.0, 0.0, 1.0));
  out[1] = static_cast<float>(std::clamp(u / 255.0, 0.0, 1.0));
  out[2] = static_cast<float>(std::clamp(v / 255.0, 0.0, 1.0));
}

inline InputTensor rgb_to_yuv(const render::Image& img) {
  require(img.height == InputTensor::kHeight && img.width == InputTensor::kWidth, ErrorKind::ShapeMismatch,
          "rgb_to_yuv expects a 32x64 image, got " + std::to_string(img.height) + "x" + std::to_string(img.width));
  InputTensor t;
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      float yuv[3];
      rgb_to_yuv_pixel(img.at(r, c), yuv);
      for (int ch = 0; ch < 3; ++ch) t.at(ch, r, c) = yuv[ch];
    }
  }
  return t;
}

// Crop, resize and color-convert straight from a full-frame pixel source.
// Only the source pixels the bilinear taps touch are requested, which lets a
// renderer skip the rest of the frame.
template <typename FramePixelFn>
InputTensor preprocess_from(const FramePixelFn& frame_pixel) {
  auto cropped = [&frame_pixel](int r, int c) { return frame_pixel(r + kCropRows, c); };
  const render::Image small = resize_bilinear_from(cropped, kFrameHeight - kCropRows, kFrameWidth,
                                                   InputTensor::kHeight, InputTensor::kWidth);
  return rgb_to_yuv(small);
}

inline InputTensor preprocess(const render::Image& frame) {
  require(frame.height == kFrameHeight && frame.width == kFrameWidth, ErrorKind::ShapeMismatch,
          "preprocess expects a 480x640 frame, got " + std::to_string(frame.height) + "x" +
              std::to_string(frame.width));
  return preprocess_from([&frame](int r, int c) { return frame.at(r, c); });
}

}  // namespace preprocess
}  // namespace laneil
