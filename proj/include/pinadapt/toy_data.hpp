#pragma once

// Procedural 64x64 segmentation data with K = 4 classes: background,
// circle, square and triangle, each shape with a class-dependent color.
// The shifted ("toy night") variant applies a global photometric transform
// to images only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pinadapt/dataset.hpp"
#include "pinadapt/image_io.hpp"
#include "pinadapt/metrics.hpp"
#include "pinadapt/random.hpp"

namespace pinadapt {

struct ToyShift {
  double value_scale = 0.45;
  double hue_degrees = 30.0;
};

inline constexpr std::size_t kToyClasses = 4;
inline constexpr std::size_t kToyImageSize = 64;

namespace detail {

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0.0) h += 360.0;
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = std::fmod(h, 360.0);
  if (h < 0.0) h += 360.0;
  const double c = v * s;
  const double x = c * (1.0 - std::fabs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double rr = 0, gg = 0, bb = 0;
  switch (static_cast<int>(h / 60.0)) {
    case 0: rr = c, gg = x; break;
    case 1: rr = x, gg = c; break;
    case 2: gg = c, bb = x; break;
    case 3: gg = x, bb = c; break;
    case 4: rr = x, bb = c; break;
    default: rr = c, bb = x; break;
  }
  r = rr + m;
  g = gg + m;
  b = bb + m;
}

}  // namespace detail

/// Value scaling and hue rotation per pixel.
inline RgbImage apply_toy_shift(const RgbImage& img, const ToyShift& shift) {
  RgbImage out = img;
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    double h, s, v;
    detail::rgb_to_hsv(img.pixels[i] / 255.0, img.pixels[i + 1] / 255.0, img.pixels[i + 2] / 255.0, h, s, v);
    double r, g, b;
    detail::hsv_to_rgb(h + shift.hue_degrees, s, v * shift.value_scale, r, g, b);
    out.pixels[i] = detail::clamp_u8(r * 255.0);
    out.pixels[i + 1] = detail::clamp_u8(g * 255.0);
    out.pixels[i + 2] = detail::clamp_u8(b * 255.0);
  }
  return out;
}

struct ToySample {
  RgbImage image;
  LabelMask label;
};

/// One procedurally rendered sample, fully determined by `seed`.
inline ToySample render_toy_sample(std::uint64_t seed) {
  constexpr std::size_t n = kToyImageSize;
  Rng rng(seed);
  ToySample s{RgbImage(n, n), LabelMask(n, n, 0)};

  const double base[3] = {rng.uniform(100, 160), rng.uniform(100, 160), rng.uniform(100, 160)};
  const double grad_x = rng.uniform(-0.6, 0.6);
  const double grad_y = rng.uniform(-0.6, 0.6);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      std::uint8_t* px = s.image.at(y, x);
      const double ramp = grad_x * (static_cast<double>(x) - 32.0) + grad_y * (static_cast<double>(y) - 32.0);
      for (int c = 0; c < 3; ++c) px[c] = detail::clamp_u8(base[c] + ramp + rng.uniform(-10, 10));
    }
  }

  // Class colors: circle red, square green, triangle blue.
  static constexpr double kColors[4][3] = {{0, 0, 0}, {205, 55, 45}, {55, 185, 65}, {55, 75, 205}};
  const int shapes = 1 + static_cast<int>(rng.index(3));
  for (int k = 0; k < shapes; ++k) {
    const int cls = 1 + static_cast<int>(rng.index(3));
    const double cx = rng.uniform(10, 54);
    const double cy = rng.uniform(10, 54);
    const double r = rng.uniform(6, 14);
    double color[3];
    for (int c = 0; c < 3; ++c) color[c] = kColors[cls][c] + rng.uniform(-20, 20);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        bool inside = false;
        switch (cls) {
          case 1: inside = dx * dx + dy * dy <= r * r; break;
          case 2: inside = std::fabs(dx) <= r * 0.85 && std::fabs(dy) <= r * 0.85; break;
          default: inside = dy <= r * 0.8 && dy >= -r && std::fabs(dx) <= (dy + r) * 0.6; break;
        }
        if (!inside) continue;
        std::uint8_t* px = s.image.at(y, x);
        for (int c = 0; c < 3; ++c) px[c] = detail::clamp_u8(color[c] + rng.uniform(-8, 8));
        s.label.at(y, x) = static_cast<std::uint8_t>(cls);
      }
    }
  }
  return s;
}

struct ToyDatasets {
  DatasetSpec source_train;
  DatasetSpec source_val;
  DatasetSpec target_val;        // shifted copies of source_val images
  DatasetSpec target_reference;  // held-out shifted images, disjoint from both val sets
};

inline DatasetSpec toy_split_spec(const std::filesystem::path& root, const std::string& split) {
  DatasetSpec s;
  s.root = root;
  s.split = split;
  s.num_classes = kToyClasses;
  return s;
}

/// Materializes the toy splits under root. Same seed, same bytes.
inline ToyDatasets generate_toy_dataset(const std::filesystem::path& root, std::uint64_t seed, std::size_t n_train,
                                        std::size_t n_val, std::size_t n_reference = 16, ToyShift shift = {}) {
  if (n_train < 1 || n_val < 1 || n_reference < 1) throw ValidationError("toy dataset: split sizes must be >= 1");
  auto write_split = [&](const std::string& split, std::size_t count, std::uint64_t stream, bool shifted) {
    std::filesystem::create_directories(root / "images" / split);
    std::filesystem::create_directories(root / "labels" / split);
    for (std::size_t i = 0; i < count; ++i) {
      ToySample s = render_toy_sample(mix_seed(seed, stream + i));
      if (shifted) s.image = apply_toy_shift(s.image, shift);
      char name[32];
      std::snprintf(name, sizeof(name), "%05zu", i);
      write_rgb(root / "images" / split / (std::string(name) + ".ppm"), s.image);
      write_mask(root / "labels" / split / (std::string(name) + ".pgm"), s.label);
    }
  };
  write_split("train", n_train, 0, false);
  write_split("val", n_val, 1'000'000, false);
  write_split("val_shifted", n_val, 1'000'000, true);
  write_split("reference_shifted", n_reference, 2'000'000, true);
  return {toy_split_spec(root, "train"), toy_split_spec(root, "val"), toy_split_spec(root, "val_shifted"),
          toy_split_spec(root, "reference_shifted")};
}

}  // namespace pinadapt
