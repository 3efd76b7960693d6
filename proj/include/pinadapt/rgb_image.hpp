#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace pinadapt {

namespace detail {

inline std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace detail

/// Interleaved 8-bit RGB.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // [H][W][3]

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0) {}

  std::uint8_t* at(std::size_t y, std::size_t x) { return pixels.data() + (y * width + x) * 3; }
  const std::uint8_t* at(std::size_t y, std::size_t x) const { return pixels.data() + (y * width + x) * 3; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

}  // namespace pinadapt
