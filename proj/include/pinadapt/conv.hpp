#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pinadapt/errors.hpp"
#include "pinadapt/feature_map.hpp"
#include "pinadapt/random.hpp"

namespace pinadapt {

/// Square-kernel 2-D convolution with zero padding of kernel/2.
struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::vector<double> weight;  // [out][in][k][k]
  std::vector<double> bias;    // [out]

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t s)
      : in_channels(in), out_channels(out), kernel(k), stride(s), weight(out * in * k * k, 0.0), bias(out, 0.0) {}

  /// He-normal weights and small uniform bias from the given generator.
  static Conv2d random(std::size_t in, std::size_t out, std::size_t k, std::size_t s, Rng& rng) {
    Conv2d conv(in, out, k, s);
    const double std = std::sqrt(2.0 / static_cast<double>(in * k * k));
    for (auto& w : conv.weight) w = rng.normal(0.0, std);
    for (auto& b : conv.bias) b = rng.uniform(-0.1, 0.1);
    return conv;
  }

  std::size_t out_extent(std::size_t in_extent) const { return (in_extent + 2 * (kernel / 2) - kernel) / stride + 1; }

  double& w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return weight[((o * in_channels + i) * kernel + ky) * kernel + kx];
  }
  double w(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return weight[((o * in_channels + i) * kernel + ky) * kernel + kx];
  }

  FeatureMap forward(const FeatureMap& in, bool relu) const {
    if (in.channels() != in_channels) {
      throw ValidationError("conv: expected " + std::to_string(in_channels) + " input channels, got " +
                            std::to_string(in.channels()));
    }
    const std::size_t oh = out_extent(in.height());
    const std::size_t ow = out_extent(in.width());
    const long pad = static_cast<long>(kernel / 2);
    const long ih = static_cast<long>(in.height());
    const long iw = static_cast<long>(in.width());
    FeatureMap out(out_channels, oh, ow);
    for (std::size_t o = 0; o < out_channels; ++o) {
      auto plane = out.channel(o);
      for (auto& v : plane) v = bias[o];
      for (std::size_t i = 0; i < in_channels; ++i) {
        const auto src = in.channel(i);
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const double wv = w(o, i, ky, kx);
            for (std::size_t y = 0; y < oh; ++y) {
              const long sy = static_cast<long>(y * stride + ky) - pad;
              if (sy < 0 || sy >= ih) continue;
              double* dst = plane.data() + y * ow;
              const double* row = src.data() + sy * iw;
              for (std::size_t x = 0; x < ow; ++x) {
                const long sx = static_cast<long>(x * stride + kx) - pad;
                if (sx < 0 || sx >= iw) continue;
                dst[x] += wv * row[sx];
              }
            }
          }
        }
      }
      if (relu) {
        for (auto& v : plane) v = v > 0.0 ? v : 0.0;
      }
    }
    return out;
  }

  /// Backpropagates grad_out (already masked by any activation) to the input
  /// and, when requested, accumulates parameter gradients.
  FeatureMap backward(const FeatureMap& in, const FeatureMap& grad_out, std::vector<double>* grad_weight = nullptr,
                      std::vector<double>* grad_bias = nullptr) const {
    const std::size_t oh = grad_out.height();
    const std::size_t ow = grad_out.width();
    const long pad = static_cast<long>(kernel / 2);
    const long ih = static_cast<long>(in.height());
    const long iw = static_cast<long>(in.width());
    FeatureMap grad_in(in_channels, in.height(), in.width());
    for (std::size_t o = 0; o < out_channels; ++o) {
      const auto g = grad_out.channel(o);
      if (grad_bias != nullptr) {
        double s = 0.0;
        for (const double v : g) s += v;
        (*grad_bias)[o] += s;
      }
      for (std::size_t i = 0; i < in_channels; ++i) {
        const auto src = in.channel(i);
        auto dst = grad_in.channel(i);
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const double wv = w(o, i, ky, kx);
            double gw = 0.0;
            for (std::size_t y = 0; y < oh; ++y) {
              const long sy = static_cast<long>(y * stride + ky) - pad;
              if (sy < 0 || sy >= ih) continue;
              const double* grow = g.data() + y * ow;
              const double* srow = src.data() + sy * iw;
              double* drow = dst.data() + sy * iw;
              for (std::size_t x = 0; x < ow; ++x) {
                const long sx = static_cast<long>(x * stride + kx) - pad;
                if (sx < 0 || sx >= iw) continue;
                drow[sx] += wv * grow[x];
                gw += grow[x] * srow[sx];
              }
            }
            if (grad_weight != nullptr) (*grad_weight)[((o * in_channels + i) * kernel + ky) * kernel + kx] += gw;
          }
        }
      }
    }
    return grad_in;
  }
};

/// Zeroes grad entries where the post-ReLU activation is not positive.
inline void relu_mask(const FeatureMap& activation, FeatureMap& grad) {
  auto a = activation.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (a[i] <= 0.0) g[i] = 0.0;
  }
}

inline std::uint64_t checksum_doubles(std::uint64_t h, const std::vector<double>& values) {
  for (const double v : values) {
    h ^= std::bit_cast<std::uint64_t>(v);
    h *= 0x100000001b3ULL;
    h ^= h >> 29;
  }
  return h;
}

}  // namespace pinadapt
