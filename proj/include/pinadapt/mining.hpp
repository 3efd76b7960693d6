#pragma once

// Style mining: for each source feature map, optimize PIN statistics by
// momentum gradient descent so that the embedding of the stylized feature
// moves toward a target embedding (cosine distance loss, no regularizer).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ranges>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pinadapt/encoder.hpp"
#include "pinadapt/errors.hpp"
#include "pinadapt/feature_map.hpp"
#include "pinadapt/random.hpp"
#include "pinadapt/stats.hpp"

namespace pinadapt {

enum class StyleInit {
  source,         // channel_stats of the source feature
  identity,       // mu = 0, sigma = 1
  random_normal,  // mu, sigma ~ N(0, 1), seeded per instance
};

inline const char* to_string(StyleInit init) {
  switch (init) {
    case StyleInit::source: return "source";
    case StyleInit::identity: return "identity";
    case StyleInit::random_normal: return "random_normal";
  }
  return "?";
}

inline StyleInit style_init_from_string(std::string_view s) {
  if (s == "source") return StyleInit::source;
  if (s == "identity" || s == "zero") return StyleInit::identity;
  if (s == "random_normal" || s == "random") return StyleInit::random_normal;
  throw ValidationError("unknown style init '" + std::string(s) + "'");
}

struct MiningConfig {
  long iterations = 100;
  double learning_rate = 1.0;
  double momentum = 0.9;
  long batch_size = 16;
  std::uint64_t seed = 0;
  StyleInit init = StyleInit::source;
  double eps = 1e-5;
  int workers = 1;

  void validate() const {
    if (iterations < 0) throw ValidationError("mining: iterations must be >= 0");
    if (!(learning_rate > 0.0)) throw ValidationError("mining: learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("mining: momentum must be in [0, 1)");
    if (batch_size < 1) throw ValidationError("mining: batch_size must be >= 1");
    if (workers < 1) throw ValidationError("mining: workers must be >= 1");
    StatsEpsilon{eps};
  }

  /// Toy-backend preset. Its Layer1 activations are an order of magnitude
  /// smaller than CLIP's, so the step size is scaled down accordingly.
  static MiningConfig toy() {
    MiningConfig c;
    c.learning_rate = 0.3;
    return c;
  }
};

/// Loss of PIN parameters against a target: cosine distance between the
/// embedding of pin_apply(f, params) and the target embedding.
inline double pin_loss(const EncoderBackend& backend, const FeatureMap& f, const StyleStats<double>& params,
                       const EmbeddingVector& target, StatsEpsilon eps = {}) {
  return cosine_distance(backend.embed_from_features(pin_apply(f, params, eps)), target);
}

/// Loss and its gradient w.r.t. (mu, sigma).
inline double pin_loss_grad(const EncoderBackend& backend, const FeatureMap& f, const StyleStats<double>& params,
                            const EmbeddingVector& target, StyleStats<double>& grad, StatsEpsilon eps = {}) {
  const FeatureMap stylized = pin_apply(f, params, eps);
  // Forward once to obtain the embedding, then backpropagate d(loss)/d(embedding).
  const EmbeddingVector emb = backend.embed_from_features(stylized);
  const double loss = cosine_distance(emb, target);
  const std::vector<double> d_emb = cosine_distance_grad(emb.span(), target.span());
  FeatureMap d_stylized;
  backend.embed_from_features_vjp(stylized, d_emb, d_stylized);
  grad = pin_apply_vjp(f, d_stylized, eps);
  return loss;
}

struct MiningTrace {
  StyleStats<double> stats;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

inline StyleStats<double> initial_style(const FeatureMap& f, const MiningConfig& cfg, std::uint64_t instance) {
  switch (cfg.init) {
    case StyleInit::source: return channel_stats(f, StatsEpsilon{cfg.eps});
    case StyleInit::identity:
      return StyleStats<double>(std::vector<double>(f.channels(), 0.0), std::vector<double>(f.channels(), 1.0));
    case StyleInit::random_normal: {
      Rng rng(mix_seed(cfg.seed, instance));
      StyleStats<double> s(f.channels());
      for (auto& v : s.mu) v = rng.normal();
      for (auto& v : s.sigma) v = rng.normal();
      return s;
    }
  }
  throw ValidationError("mining: invalid init");
}

/// Runs the optimization for one instance and reports the loss before the
/// first and after the last update. `instance` seeds random initialization.
inline MiningTrace mine_style_traced(const FeatureMap& f_s, const EmbeddingVector& target, const MiningConfig& cfg,
                                     const EncoderBackend& backend, std::uint64_t instance = 0) {
  cfg.validate();
  require_finite(f_s, "mine_style");
  if (f_s.channels() != backend.feature_channels()) {
    throw ValidationError("mine_style: feature has " + std::to_string(f_s.channels()) + " channels, backend expects " +
                          std::to_string(backend.feature_channels()));
  }
  if (target.dim() != backend.embedding_dim()) {
    throw ValidationError("mine_style: target embedding has dimension " + std::to_string(target.dim()) +
                          ", backend produces " + std::to_string(backend.embedding_dim()));
  }
  target.validate("mine_style target");
  const StatsEpsilon eps{cfg.eps};

  MiningTrace trace;
  StyleStats<double> params = initial_style(f_s, cfg, instance);
  StyleStats<double> velocity(f_s.channels());
  StyleStats<double> grad;

  auto check = [](double loss, const StyleStats<double>& p, long it) {
    if (!std::isfinite(loss)) throw OptimizationError("non-finite loss at iteration " + std::to_string(it), it);
    if (!p.finite()) throw OptimizationError("non-finite style parameters at iteration " + std::to_string(it), it);
  };

  for (long it = 0; it < cfg.iterations; ++it) {
    const double loss = pin_loss_grad(backend, f_s, params, target, grad, eps);
    check(loss, params, it);
    if (it == 0) trace.initial_loss = loss;
    for (std::size_t c = 0; c < params.channels(); ++c) {
      velocity.mu[c] = cfg.momentum * velocity.mu[c] + grad.mu[c];
      velocity.sigma[c] = cfg.momentum * velocity.sigma[c] + grad.sigma[c];
      params.mu[c] -= cfg.learning_rate * velocity.mu[c];
      params.sigma[c] -= cfg.learning_rate * velocity.sigma[c];
    }
    if (!params.finite()) {
      throw OptimizationError("non-finite style parameters after update " + std::to_string(it + 1), it + 1);
    }
  }
  trace.final_loss = pin_loss(backend, f_s, params, target, eps);
  check(trace.final_loss, params, cfg.iterations);
  if (cfg.iterations == 0) trace.initial_loss = trace.final_loss;
  trace.stats = std::move(params);
  return trace;
}

inline StyleStats<double> mine_style(const FeatureMap& f_s, const EmbeddingVector& target, const MiningConfig& cfg,
                                     const EncoderBackend& backend, std::uint64_t instance = 0) {
  return mine_style_traced(f_s, target, cfg, backend, instance).stats;
}

/// What the bank's styles were steered toward.
struct TargetDescriptor {
  std::string kind;   // "prompt", "concept+suffix" or "image"
  std::string value;  // prompt text, concept id + suffix, or content hash

  friend bool operator==(const TargetDescriptor&, const TargetDescriptor&) = default;
};

struct BankManifest {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::size_t channels = 0;
  std::size_t count = 0;
  std::string encoder_id;
  TargetDescriptor target;
  MiningConfig mining;
  std::uint64_t seed = 0;
  std::size_t sigma_nonpositive_total = 0;
  std::string feature_stage = "layer1";
  std::string crop_policy = "native";

  friend bool operator==(const BankManifest& a, const BankManifest& b) {
    return a.format_version == b.format_version && a.channels == b.channels && a.count == b.count &&
           a.encoder_id == b.encoder_id && a.target == b.target && a.seed == b.seed &&
           a.sigma_nonpositive_total == b.sigma_nonpositive_total && a.feature_stage == b.feature_stage &&
           a.crop_policy == b.crop_policy && a.mining.iterations == b.mining.iterations &&
           a.mining.learning_rate == b.mining.learning_rate && a.mining.momentum == b.mining.momentum &&
           a.mining.batch_size == b.mining.batch_size && a.mining.seed == b.mining.seed &&
           a.mining.init == b.mining.init && a.mining.eps == b.mining.eps;
  }
};

/// Ordered set of mined styles, stored at file precision (float32).
struct StyleBank {
  BankManifest manifest;
  std::vector<StyleStats<float>> styles;

  std::size_t size() const noexcept { return styles.size(); }
  bool empty() const noexcept { return styles.empty(); }

  void add(const StyleStats<double>& s) {
    if (manifest.channels == 0) manifest.channels = s.channels();
    if (s.channels() != manifest.channels) throw ValidationError("style bank: channel mismatch");
    styles.push_back(s.cast<float>());
    manifest.count = styles.size();
    manifest.sigma_nonpositive_total += styles.back().sigma_nonpositive_count();
  }

  void validate() const {
    if (manifest.count != styles.size()) throw ValidationError("style bank: manifest count differs from entries");
    for (const auto& s : styles) {
      if (s.channels() != manifest.channels) throw ValidationError("style bank: entry channel mismatch");
    }
  }

  friend bool operator==(const StyleBank&, const StyleBank&) = default;
};

/// Mines one style per input feature, in input order. Instances are grouped
/// into batches of cfg.batch_size for scheduling across cfg.workers threads;
/// every instance keeps its own parameters and its own un-reduced loss, so
/// results do not depend on batch composition.
template <std::ranges::input_range Features>
  requires std::same_as<std::ranges::range_value_t<Features>, FeatureMap>
StyleBank mine_bank(Features&& features, const EmbeddingVector& target, const MiningConfig& cfg,
                    const EncoderBackend& backend, TargetDescriptor descriptor = {},
                    std::vector<MiningTrace>* traces = nullptr) {
  cfg.validate();
  StyleBank bank;
  bank.manifest.channels = backend.feature_channels();
  bank.manifest.encoder_id = backend.id();
  bank.manifest.target = std::move(descriptor);
  bank.manifest.mining = cfg;
  bank.manifest.seed = cfg.seed;

  const std::size_t chunk = static_cast<std::size_t>(cfg.batch_size) * static_cast<std::size_t>(cfg.workers);
  std::vector<FeatureMap> pending;
  std::size_t next_index = 0;

  auto flush = [&] {
    std::vector<MiningTrace> results(pending.size());
    auto run = [&](std::size_t first, std::size_t last) {
      for (std::size_t i = first; i < last; ++i) {
        const std::size_t global = next_index + i;
        try {
          results[i] = mine_style_traced(pending[i], target, cfg, backend, global);
        } catch (const OptimizationError& e) {
          throw OptimizationError(std::string(e.what()) + " (source index " + std::to_string(global) + ")",
                                  e.iteration(), static_cast<long>(global));
        }
      }
    };
    if (cfg.workers == 1 || pending.size() <= static_cast<std::size_t>(cfg.batch_size)) {
      run(0, pending.size());
    } else {
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.workers));
      std::vector<std::thread> pool;
      const std::size_t b = static_cast<std::size_t>(cfg.batch_size);
      for (std::size_t w = 0; w < static_cast<std::size_t>(cfg.workers); ++w) {
        const std::size_t first = std::min(pending.size(), w * b);
        const std::size_t last = std::min(pending.size(), first + b);
        if (first == last) break;
        pool.emplace_back([&, w, first, last] {
          try {
            run(first, last);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    for (auto& r : results) {
      bank.add(r.stats);
      if (traces != nullptr) traces->push_back(std::move(r));
    }
    next_index += pending.size();
    pending.clear();
  };

  for (auto&& f : features) {
    pending.push_back(f);
    if (pending.size() == chunk) flush();
  }
  if (!pending.empty()) flush();
  if (bank.empty()) throw ValidationError("mine_bank: empty feature stream");
  return bank;
}

}  // namespace pinadapt
