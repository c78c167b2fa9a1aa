#pragma once

#include <cstdint>
#include <vector>

#include "laneil/core/error.hpp"

namespace laneil::render {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  std::uint8_t operator[](int ch) const { return ch == 0 ? r : (ch == 1 ? g : b); }
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// 8-bit RGB image, row-major from the top row, channels interleaved.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int h, int w, Rgb fill = {}) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3) {
    for (std::size_t i = 0; i < data.size(); i += 3) {
      data[i] = fill.r;
      data[i + 1] = fill.g;
      data[i + 2] = fill.b;
    }
  }

  std::size_t offset(int row, int col) const { return (static_cast<std::size_t>(row) * width + col) * 3; }
  Rgb at(int row, int col) const {
    const auto o = offset(row, col);
    return {data[o], data[o + 1], data[o + 2]};
  }
  void set(int row, int col, Rgb c) {
    const auto o = offset(row, col);
    data[o] = c.r;
    data[o + 1] = c.g;
    data[o + 2] = c.b;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace laneil::render
