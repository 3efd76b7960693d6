#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pinadapt/errors.hpp"

namespace pinadapt {

/// Dense channel-major activation block [C, H, W].
template <typename T>
class BasicFeatureMap {
 public:
  using value_type = T;

  BasicFeatureMap() = default;

  BasicFeatureMap(std::size_t channels, std::size_t height, std::size_t width, T fill = T{0})
      : channels_(channels), height_(height), width_(width), values_(channels * height * width, fill) {
    if (channels == 0 || height == 0 || width == 0) {
      throw ValidationError("feature map extents must be >= 1");
    }
  }

  BasicFeatureMap(std::size_t channels, std::size_t height, std::size_t width, std::vector<T> values)
      : channels_(channels), height_(height), width_(width), values_(std::move(values)) {
    if (channels == 0 || height == 0 || width == 0) {
      throw ValidationError("feature map extents must be >= 1");
    }
    if (values_.size() != channels * height * width) {
      throw ValidationError("feature map value count " + std::to_string(values_.size()) +
                            " does not match extents " + std::to_string(channels * height * width));
    }
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(std::size_t c, std::size_t y, std::size_t x) { return values_[(c * height_ + y) * width_ + x]; }
  const T& operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * height_ + y) * width_ + x];
  }

  std::span<T> channel(std::size_t c) { return {values_.data() + c * plane_size(), plane_size()}; }
  std::span<const T> channel(std::size_t c) const { return {values_.data() + c * plane_size(), plane_size()}; }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  bool same_shape(const BasicFeatureMap& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  std::string shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
  }

  template <typename U>
  BasicFeatureMap<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return BasicFeatureMap<U>(channels_, height_, width_, std::move(out));
  }

  friend bool operator==(const BasicFeatureMap&, const BasicFeatureMap&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> values_;
};

using FeatureMap = BasicFeatureMap<double>;

/// A decoded image is a 3-channel map of normalized pixel values.
using Image = BasicFeatureMap<double>;

template <typename T>
void require_finite(const BasicFeatureMap<T>& f, const char* what) {
  if (f.empty()) throw ValidationError(std::string(what) + ": empty feature map");
  for (const T v : f.values()) {
    if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite value");
  }
}

}  // namespace pinadapt
