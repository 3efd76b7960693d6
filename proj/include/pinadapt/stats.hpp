#pragma once

// Channel statistics, instance normalization and the statistics-injection
// operators built on top of them (AdaIN / PIN), plus the embedding-space
// cosine distance and the two statistics perturbations (mixing, Gaussian).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pinadapt/errors.hpp"
#include "pinadapt/feature_map.hpp"
#include "pinadapt/random.hpp"

namespace pinadapt {

struct StatsEpsilon {
  double eps = 1e-5;

  StatsEpsilon() = default;
  explicit StatsEpsilon(double value) : eps(value) {
    if (!(value > 0.0) || !std::isfinite(value)) throw ValidationError("stats epsilon must be > 0");
  }
};

/// Per-channel mean and standard deviation of a feature map.
template <typename T>
struct StyleStats {
  std::vector<T> mu;
  std::vector<T> sigma;

  StyleStats() = default;
  explicit StyleStats(std::size_t channels) : mu(channels, T{0}), sigma(channels, T{0}) {}
  StyleStats(std::vector<T> m, std::vector<T> s) : mu(std::move(m)), sigma(std::move(s)) {
    if (mu.size() != sigma.size()) throw ValidationError("style stats: mu and sigma lengths differ");
  }

  std::size_t channels() const noexcept { return mu.size(); }

  std::size_t sigma_nonpositive_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(sigma.begin(), sigma.end(), [](T s) { return s <= T{0}; }));
  }

  bool finite() const noexcept {
    auto ok = [](T v) { return std::isfinite(v); };
    return std::all_of(mu.begin(), mu.end(), ok) && std::all_of(sigma.begin(), sigma.end(), ok);
  }

  template <typename U>
  StyleStats<U> cast() const {
    return StyleStats<U>(std::vector<U>(mu.begin(), mu.end()), std::vector<U>(sigma.begin(), sigma.end()));
  }

  friend bool operator==(const StyleStats&, const StyleStats&) = default;
};

namespace detail {

template <typename T, typename U>
void require_matching_channels(const BasicFeatureMap<T>& f, const StyleStats<U>& s, const char* op) {
  if (s.mu.size() != f.channels() || s.sigma.size() != f.channels()) {
    throw ValidationError(std::string(op) + ": style has " + std::to_string(s.mu.size()) +
                          " channels, feature map has " + std::to_string(f.channels()));
  }
  if (!s.finite()) throw ValidationError(std::string(op) + ": non-finite style statistics");
}

}  // namespace detail

/// Spatial mean and population standard deviation per channel, with eps
/// added to the variance under the square root.
template <typename T>
StyleStats<T> channel_stats(const BasicFeatureMap<T>& f, StatsEpsilon eps = {}) {
  require_finite(f, "channel_stats");
  StyleStats<T> out(f.channels());
  const double n = static_cast<double>(f.plane_size());
  for (std::size_t c = 0; c < f.channels(); ++c) {
    const auto plane = f.channel(c);
    double sum = 0.0;
    for (const T v : plane) sum += v;
    const double mean = sum / n;
    double sq = 0.0;
    for (const T v : plane) sq += (v - mean) * (v - mean);
    out.mu[c] = static_cast<T>(mean);
    out.sigma[c] = static_cast<T>(std::sqrt(sq / n + eps.eps));
  }
  return out;
}

/// Batched inputs: statistics are computed per instance.
template <typename T>
std::vector<StyleStats<T>> channel_stats(std::span<const BasicFeatureMap<T>> batch, StatsEpsilon eps = {}) {
  std::vector<StyleStats<T>> out;
  out.reserve(batch.size());
  for (const auto& f : batch) out.push_back(channel_stats(f, eps));
  return out;
}

/// Instance normalization with unit scale and zero shift.
template <typename T>
BasicFeatureMap<T> instance_norm(const BasicFeatureMap<T>& f, StatsEpsilon eps = {}) {
  const auto stats = channel_stats(f, eps);
  BasicFeatureMap<T> out = f;
  for (std::size_t c = 0; c < f.channels(); ++c) {
    auto plane = out.channel(c);
    for (auto& v : plane) v = (v - stats.mu[c]) / stats.sigma[c];
  }
  return out;
}

/// Re-statisticizes f to the target per-channel mean and standard deviation:
/// target.sigma * (f - mu(f)) / sigma(f) + target.mu.
template <typename T, typename U>
BasicFeatureMap<T> adain(const BasicFeatureMap<T>& f, const StyleStats<U>& target, StatsEpsilon eps = {}) {
  detail::require_matching_channels(f, target, "adain");
  const auto own = channel_stats(f, eps);
  BasicFeatureMap<T> out = f;
  for (std::size_t c = 0; c < f.channels(); ++c) {
    const T scale = static_cast<T>(target.sigma[c]) / own.sigma[c];
    const T shift = static_cast<T>(target.mu[c]);
    const T mean = own.mu[c];
    for (auto& v : out.channel(c)) v = scale * (v - mean) + shift;
  }
  return out;
}

/// PIN forward: AdaIN where (mu, sigma) are free optimization variables.
template <typename T, typename U>
BasicFeatureMap<T> pin_apply(const BasicFeatureMap<T>& f, const StyleStats<U>& params, StatsEpsilon eps = {}) {
  return adain(f, params, eps);
}

/// Vector-Jacobian product of pin_apply with respect to its parameters.
/// The source statistics of f are constants, so the gradient is
/// dL/dmu_c = sum(g_c) and dL/dsigma_c = sum(g_c * (f_c - mu(f)_c) / sigma(f)_c).
template <typename T>
StyleStats<T> pin_apply_vjp(const BasicFeatureMap<T>& f, const BasicFeatureMap<T>& grad_out, StatsEpsilon eps = {}) {
  if (!f.same_shape(grad_out)) throw ValidationError("pin_apply_vjp: gradient shape mismatch");
  const auto own = channel_stats(f, eps);
  StyleStats<T> grad(f.channels());
  for (std::size_t c = 0; c < f.channels(); ++c) {
    const auto x = f.channel(c);
    const auto g = grad_out.channel(c);
    double gm = 0.0;
    double gs = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      gm += g[i];
      gs += g[i] * (x[i] - own.mu[c]) / own.sigma[c];
    }
    grad.mu[c] = static_cast<T>(gm);
    grad.sigma[c] = static_cast<T>(gs);
  }
  return grad;
}

namespace detail {

template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename T>
double checked_norm(std::span<const T> v, const char* op) {
  double sq = 0.0;
  for (const T x : v) {
    if (!std::isfinite(x)) throw ValidationError(std::string(op) + ": non-finite embedding");
    sq += static_cast<double>(x) * static_cast<double>(x);
  }
  const double n = std::sqrt(sq);
  if (!(n > 0.0)) throw ValidationError(std::string(op) + ": zero-norm embedding");
  return n;
}

}  // namespace detail

/// 1 - cos(a, b), in [0, 2].
template <typename T>
double cosine_distance(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ValidationError("cosine_distance: dimension mismatch");
  const double na = detail::checked_norm(a, "cosine_distance");
  const double nb = detail::checked_norm(b, "cosine_distance");
  const double cos = std::clamp(detail::dot(a, b) / (na * nb), -1.0, 1.0);
  return 1.0 - cos;
}

template <typename T>
double cosine_distance(const std::vector<T>& a, const std::vector<T>& b) {
  return cosine_distance(std::span<const T>(a), std::span<const T>(b));
}

/// Gradient of cosine_distance(a, b) with respect to a.
template <typename T>
std::vector<T> cosine_distance_grad(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ValidationError("cosine_distance_grad: dimension mismatch");
  const double na = detail::checked_norm(a, "cosine_distance_grad");
  const double nb = detail::checked_norm(b, "cosine_distance_grad");
  const double ab = detail::dot(a, b);
  std::vector<T> g(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    g[i] = static_cast<T>(-(b[i] / (na * nb) - ab * a[i] / (na * na * na * nb)));
  }
  return g;
}

/// Per-channel convex combination alpha * trg + (1 - alpha) * src.
template <typename T, typename A>
StyleStats<T> mix_stats(const StyleStats<T>& src, const StyleStats<T>& trg, std::span<const A> alpha) {
  if (src.channels() != trg.channels() || alpha.size() != src.channels()) {
    throw ValidationError("mix_stats: length mismatch");
  }
  StyleStats<T> out(src.channels());
  for (std::size_t c = 0; c < src.channels(); ++c) {
    const double a = static_cast<double>(alpha[c]);
    if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("mix_stats: alpha outside [0, 1]");
    out.mu[c] = static_cast<T>(a * trg.mu[c] + (1.0 - a) * src.mu[c]);
    out.sigma[c] = static_cast<T>(a * trg.sigma[c] + (1.0 - a) * src.sigma[c]);
  }
  return out;
}

template <typename T>
StyleStats<T> mix_stats(const StyleStats<T>& src, const StyleStats<T>& trg, const std::vector<double>& alpha) {
  return mix_stats(src, trg, std::span<const double>(alpha));
}

/// Passing this as snr_db disables the perturbation.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Mean power of the concatenated (mu, sigma) vector.
template <typename T>
double stats_power(const StyleStats<T>& s) {
  double p = 0.0;
  for (const T v : s.mu) p += static_cast<double>(v) * v;
  for (const T v : s.sigma) p += static_cast<double>(v) * v;
  return s.channels() == 0 ? 0.0 : p / static_cast<double>(2 * s.channels());
}

namespace detail {

inline void check_snr(double snr_db) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
    throw ValidationError("gaussian_perturb_stats: snr_db must be finite or +inf");
  }
}

}  // namespace detail

/// Perturbs s with a given standard-normal draw `unit_noise` (length 2C,
/// mu block first), scaled so that power(s) / power(noise) = 10^(snr_db / 10)
/// in expectation.
template <typename T>
StyleStats<T> gaussian_perturb_stats(const StyleStats<T>& s, double snr_db, std::span<const double> unit_noise) {
  detail::check_snr(snr_db);
  if (!s.finite()) throw ValidationError("gaussian_perturb_stats: non-finite statistics");
  if (unit_noise.size() != 2 * s.channels()) throw ValidationError("gaussian_perturb_stats: noise length mismatch");
  if (snr_db == kNoNoise) return s;
  const double noise_std = std::sqrt(stats_power(s) / std::pow(10.0, snr_db / 10.0));
  StyleStats<T> out = s;
  const std::size_t c = s.channels();
  for (std::size_t i = 0; i < c; ++i) {
    out.mu[i] = static_cast<T>(out.mu[i] + noise_std * unit_noise[i]);
    out.sigma[i] = static_cast<T>(out.sigma[i] + noise_std * unit_noise[c + i]);
  }
  return out;
}

/// Adds i.i.d. zero-mean Gaussian noise to mu and sigma, drawn from rng.
template <typename T>
StyleStats<T> gaussian_perturb_stats(const StyleStats<T>& s, double snr_db, Rng& rng) {
  detail::check_snr(snr_db);
  if (snr_db == kNoNoise) return s;
  std::vector<double> z(2 * s.channels());
  for (auto& v : z) v = rng.normal();
  return gaussian_perturb_stats(s, snr_db, std::span<const double>(z));
}

template <typename T>
StyleStats<T> gaussian_perturb_stats(const StyleStats<T>& s, double snr_db, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  return gaussian_perturb_stats(s, snr_db, rng);
}

}  // namespace pinadapt
